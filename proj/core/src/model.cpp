#include "evcar/model.hpp"

#include <cmath>
#include <stdexcept>

namespace evcar {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("model: parameter '") + name +
                                "' must be strictly positive");
  }
}

}  // namespace

ModelConstants normalize(const CarParams& car, const Bounds& bounds) {
  require_positive(car.Lm, "Lm");
  require_positive(car.Rm, "Rm");
  require_positive(car.Km, "Km");
  require_positive(car.Valim, "Valim");
  require_positive(car.r, "r");
  require_positive(car.Kr, "Kr");
  require_positive(car.g, "g");
  require_positive(car.Kf, "Kf");
  require_positive(car.M, "M");
  require_positive(car.rho, "rho");
  require_positive(car.S, "S");
  require_positive(car.Cx, "Cx");
  require_positive(car.Rbat, "Rbat");
  require_positive(bounds.i_max, "imax");
  require_positive(bounds.alpha_f, "alphaf");
  require_positive(bounds.v_max, "vmax");

  ModelConstants mc;
  const double omega_max = bounds.omega_max(car);
  mc.w = {1.0 / car.Lm,
          car.Rm,
          car.Km,
          car.Valim,
          car.r / car.Kr,
          car.g * car.Kf,
          1.0 / car.M,
          0.5 * car.rho * car.S * car.Cx,
          car.Rbat,
          bounds.i_max,
          bounds.alpha_f,
          omega_max};
  const auto& w = mc.w;
  mc.k1 = -w[0] * w[1];
  mc.k2 = -w[0] * w[2] * w[11] / w[9];
  mc.k3 = w[4] * w[11] / w[10];
  mc.k4 = -w[5] / (w[4] * w[11]);
  mc.k5 = w[2] * w[6] * w[9] / (w[4] * w[4] * w[11]);
  mc.k6 = -w[4] * w[6] * w[7] * w[11];
  mc.k7 = w[0] * w[3] / w[9];
  mc.i_max = bounds.i_max;
  mc.alpha_f = bounds.alpha_f;
  mc.v_max = bounds.v_max;
  mc.omega_max = omega_max;
  mc.k456_positive = (mc.k4 + mc.k5 + mc.k6) > 0.0;
  return mc;
}

FieldValues fields(const ModelConstants& mc, const Vec3& x) {
  FieldValues f;
  f.F0 = Vec3(mc.k1 * x(0) + mc.k2 * x(2), mc.k3 * x(2),
              mc.k4 + mc.k5 * x(0) + mc.k6 * x(2) * x(2));
  f.F1 = Vec3(mc.k7, 0.0, 0.0);
  f.F01 = -mc.k7 * Vec3(mc.k1, 0.0, mc.k5);
  f.F001 = mc.k7 * Vec3(mc.k1 * mc.k1 + mc.k2 * mc.k5, mc.k3 * mc.k5,
                        mc.k5 * (mc.k1 + 2.0 * mc.k6 * x(2)));
  f.F10001 = Vec3(0.0, 0.0, 2.0 * mc.k5 * mc.k5 * mc.k6 * mc.k7 * mc.k7);
  return f;
}

ConstraintValues constraints(const ModelConstants& mc, const Vec3& x) {
  return ConstraintValues{x(0) - 1.0, x(2) - 1.0,
                          mc.k4 + mc.k5 * x(0) + mc.k6 * x(2) * x(2)};
}

BoundaryControls boundary_controls(const ModelConstants& mc, const Vec3& x) {
  BoundaryControls bc;
  bc.u_c1 = -(mc.k1 + mc.k2 * x(2)) / mc.k7;
  bc.u_c3 = -(-mc.k1 * (mc.k4 + mc.k6) / mc.k5 + mc.k2) / mc.k7;
  bc.x1_on_c3 = -(mc.k4 + mc.k6) / mc.k5;
  return bc;
}

double vmax_gamma_c3(const CarParams& car, double i_max, double alpha_f) {
  const double to_vmax = 3.6 * car.r / car.Kr;  // v (km/h) per omega (rad/s)
  auto residual = [&](double omega) {
    Bounds b{i_max, alpha_f, omega * to_vmax};
    const ModelConstants mc = normalize(car, b);
    return boundary_controls(mc, Vec3::Zero()).u_c3 - 1.0;
  };

  double lo = 1.0, hi = 1.0e4;
  double flo = residual(lo), fhi = residual(hi);
  if (flo * fhi > 0.0) {
    throw std::runtime_error("vmax_gamma_c3: no admissible-boundary threshold");
  }
  // Bisection until the residual is resolved; the interval collapses well
  // before 200 halvings at double precision.
  double mid = lo;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double fm = residual(mid);
    if (std::abs(fm) <= 1e-10 && (hi - lo) <= 1e-9 * mid) break;
    if (flo * fm <= 0.0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  return mid * to_vmax;
}

namespace {

double get_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw std::invalid_argument(std::string("config: missing or non-numeric key '") +
                                key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace

CarParams car_params_from_json(const nlohmann::json& j) {
  CarParams c;
  c.Lm = get_field(j, "Lm");
  c.Rm = get_field(j, "Rm");
  c.Km = get_field(j, "Km");
  c.Valim = get_field(j, "Valim");
  c.r = get_field(j, "r");
  c.Kr = get_field(j, "Kr");
  c.g = get_field(j, "g");
  c.Kf = get_field(j, "Kf");
  c.M = get_field(j, "M");
  c.rho = get_field(j, "rho");
  c.S = get_field(j, "S");
  c.Cx = get_field(j, "Cx");
  c.Rbat = get_field(j, "Rbat");
  return c;
}

Bounds bounds_from_json(const nlohmann::json& j) {
  Bounds b;
  b.i_max = get_field(j, "imax");
  b.v_max = get_field(j, "vmax");
  b.alpha_f = get_field(j, "alphaf");
  return b;
}

nlohmann::json car_params_to_json(const CarParams& c) {
  return nlohmann::json{{"Lm", c.Lm},   {"Rm", c.Rm},     {"Km", c.Km},
                        {"Valim", c.Valim}, {"r", c.r},   {"Kr", c.Kr},
                        {"g", c.g},     {"Kf", c.Kf},     {"M", c.M},
                        {"rho", c.rho}, {"S", c.S},       {"Cx", c.Cx},
                        {"Rbat", c.Rbat}};
}

nlohmann::json bounds_to_json(const Bounds& b) {
  return nlohmann::json{{"imax", b.i_max}, {"vmax", b.v_max}, {"alphaf", b.alpha_f}};
}

}  // namespace evcar
