#include "evcar/flow.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace evcar {

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct IntegOutcome {
  bool ok = false;
  std::string error;
  double t_reached = 0.0;
  FlowStats stats;
};

// Embedded RK integrator with PI step control and FSAL. The dense recorder,
// when given, receives the leading 6 components at every accepted node.
template <typename Vec, typename Rhs>
IntegOutcome dopri5(Rhs&& f, Vec& y, double t0, double t1, const FlowOptions& o,
                    DenseFlow* dense) {
  IntegOutcome out;
  out.t_reached = t0;
  if (dense) dense->clear();

  const double dir = (t1 >= t0) ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  Vec k1 = f(t0, y);
  if (dense) dense->push(t0, y.template head<6>(), k1.template head<6>());
  if (span == 0.0) {
    out.ok = true;
    return out;
  }

  auto scaled_err = [&](const Vec& y0, const Vec& y1, const Vec& e) {
    double acc = 0.0;
    for (int i = 0; i < y0.size(); ++i) {
      const double sc = o.abs_tol + o.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
      const double q = e(i) / sc;
      acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(y0.size()));
  };

  // Starting step from the magnitude of the first derivative.
  double h = span;
  {
    const double d0 = y.norm() + 1.0;
    const double d1 = k1.norm() + 1e-12;
    h = std::min({span, 0.01 * d0 / d1, o.max_step});
    h = std::max(h, 1e-10 * span);
  }
  h *= dir;

  double t = t0;
  double err_prev = 1e-4;
  Vec k2v, k3v, k4v, k5v, k6v, k7v, ynew, yerr;

  while (dir * (t1 - t) > 0.0) {
    if (std::abs(t1 - t) <= 1e-14 * std::max(1.0, std::abs(t1))) break;
    if (out.stats.steps + out.stats.rejected >= o.max_steps) {
      out.error = "flow: max step count exceeded";
      out.t_reached = t;
      return out;
    }
    if (std::abs(h) > o.max_step) h = dir * o.max_step;
    if (dir * (t + h - t1) > 0.0) h = t1 - t;
    if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t))) {
      out.error = "flow: step size underflow";
      out.t_reached = t;
      return out;
    }

    k2v = f(t + c2 * h, Vec(y + h * (a21 * k1)));
    k3v = f(t + c3 * h, Vec(y + h * (a31 * k1 + a32 * k2v)));
    k4v = f(t + c4 * h, Vec(y + h * (a41 * k1 + a42 * k2v + a43 * k3v)));
    k5v = f(t + c5 * h, Vec(y + h * (a51 * k1 + a52 * k2v + a53 * k3v + a54 * k4v)));
    k6v = f(t + h, Vec(y + h * (a61 * k1 + a62 * k2v + a63 * k3v + a64 * k4v + a65 * k5v)));
    ynew = y + h * (b1 * k1 + b3 * k3v + b4 * k4v + b5 * k5v + b6 * k6v);
    k7v = f(t + h, ynew);
    yerr = h * (e1 * k1 + e3 * k3v + e4 * k4v + e5 * k5v + e6 * k6v + e7 * k7v);

    bool finite = ynew.allFinite();
    const double err = finite ? scaled_err(y, ynew, yerr)
                              : std::numeric_limits<double>::infinity();
    if (err <= 1.0) {
      t += h;
      y = ynew;
      k1 = k7v;  // FSAL
      ++out.stats.steps;
      out.t_reached = t;
      if (dense) dense->push(t, y.template head<6>(), k1.template head<6>());
      const double fac =
          0.9 * std::pow(std::max(err, 1e-10), -0.2) * std::pow(err_prev, 0.04);
      h *= std::clamp(fac, 0.2, 5.0);
      err_prev = std::max(err, 1e-10);
    } else {
      ++out.stats.rejected;
      const double fac = std::isfinite(err)
                             ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9)
                             : 0.1;
      h *= fac;
    }
  }
  out.ok = true;
  return out;
}

using Vec42 = Eigen::Matrix<double, 42, 1>;

}  // namespace

void DenseFlow::clear() {
  ts_.clear();
  zs_.clear();
  fs_.clear();
}

void DenseFlow::push(double t, const Vec6& z, const Vec6& f) {
  ts_.push_back(t);
  zs_.push_back(z);
  fs_.push_back(f);
}

std::size_t DenseFlow::segment_for(double t) const {
  const bool forward = ts_.back() >= ts_.front();
  std::size_t lo = 0, hi = ts_.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    const bool left = forward ? (t < ts_[mid]) : (t > ts_[mid]);
    if (left)
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

Vec6 DenseFlow::eval(double t) const {
  if (ts_.size() == 1) return zs_.front();
  const std::size_t i = segment_for(t);
  const double h = ts_[i + 1] - ts_[i];
  if (h == 0.0) return zs_[i];
  const double s = (t - ts_[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * zs_[i] + h10 * h * fs_[i] + h01 * zs_[i + 1] + h11 * h * fs_[i + 1];
}

DenseFlow::Extremum DenseFlow::max_of(
    const std::function<double(double, const Vec6&)>& g, double ta, double tb) const {
  const bool forward = tb >= ta;
  const double lo = forward ? ta : tb;
  const double hi = forward ? tb : ta;

  double best_t = ta;
  double best_v = -std::numeric_limits<double>::infinity();
  const int per_seg = 4;
  std::vector<double> probes;
  probes.push_back(lo);
  for (std::size_t i = 0; i + 1 < ts_.size(); ++i) {
    const double sa = std::min(ts_[i], ts_[i + 1]);
    const double sb = std::max(ts_[i], ts_[i + 1]);
    if (sb < lo || sa > hi) continue;
    const double ca = std::max(sa, lo), cb = std::min(sb, hi);
    for (int k = 0; k <= per_seg; ++k)
      probes.push_back(ca + (cb - ca) * k / per_seg);
  }
  probes.push_back(hi);
  for (double t : probes) {
    const double v = g(t, eval(t));
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }

  // Golden-section refinement around the best probe.
  double a = std::max(lo, best_t - (hi - lo) * 0.02);
  double b = std::min(hi, best_t + (hi - lo) * 0.02);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = g(x1, eval(x1)), f2 = g(x2, eval(x2));
  for (int it = 0; it < 60 && (b - a) > 1e-12 * std::max(1.0, hi - lo); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = g(x2, eval(x2));
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = g(x1, eval(x1));
    }
  }
  const double tm = 0.5 * (a + b);
  const double vm = g(tm, eval(tm));
  if (vm > best_v) {
    best_v = vm;
    best_t = tm;
  }
  return Extremum{best_t, best_v};
}

FlowResult expmap(const ModelConstants& mc, HamiltonianId id, const PhasePoint& z0,
                  double t0, double t1, const FlowOptions& opts) {
  FlowResult res;
  if (opts.with_stm) {
    const auto var = expmap_var(mc, id, z0, Vec6::Zero(), t0, t1, opts);
    res.ok = var.ok;
    res.error = var.error;
    res.t_reached = var.t_reached;
    res.zT = var.zT;
    res.stm = var.stm;
    res.stats = var.stats;
    res.dense = var.dense;
    return res;
  }

  Vec6 y = z0.flat();
  auto rhs = [&mc, id](double, const Vec6& z) {
    Vec6 dz;
    ham_rhs(mc, id, z, dz);
    return dz;
  };
  auto out = dopri5<Vec6>(rhs, y, t0, t1, opts, opts.keep_dense ? &res.dense : nullptr);
  res.ok = out.ok;
  res.error = out.error;
  res.t_reached = out.t_reached;
  res.stats = out.stats;
  res.zT = out.ok ? PhasePoint::from_flat(y) : z0;
  return res;
}

VarFlowResult expmap_var(const ModelConstants& mc, HamiltonianId id,
                         const PhasePoint& z0, const Vec6& dz0, double t0,
                         double t1, const FlowOptions& opts) {
  VarFlowResult res;
  Vec42 y;
  y.head<6>() = z0.flat();
  Eigen::Map<Mat6>(y.data() + 6) = Mat6::Identity();

  auto rhs = [&mc, id](double, const Vec42& v) {
    Vec42 dv;
    Vec6 z = v.head<6>();
    Vec6 dz;
    Mat6 jac;
    ham_rhs_jac(mc, id, z, dz, jac);
    dv.head<6>() = dz;
    Eigen::Map<const Mat6> m(v.data() + 6);
    Eigen::Map<Mat6>(dv.data() + 6) = jac * m;
    return dv;
  };
  auto out = dopri5<Vec42>(rhs, y, t0, t1, opts, opts.keep_dense ? &res.dense : nullptr);
  res.ok = out.ok;
  res.error = out.error;
  res.t_reached = out.t_reached;
  res.stats = out.stats;
  if (out.ok) {
    res.zT = PhasePoint::from_flat(y.head<6>());
    res.stm = Eigen::Map<const Mat6>(y.data() + 6);
    res.dzT = res.stm * dz0;
  } else {
    res.zT = z0;
  }
  return res;
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  os << "t,x1,x2,x3,p1,p2,p3,u,eta,arc\n";
  os.precision(15);
  for (const auto& r : rows) {
    os << r.t;
    for (int i = 0; i < 6; ++i) os << ',' << r.z(i);
    os << ',' << r.u << ',' << r.eta << ',' << r.arc << '\n';
  }
}

}  // namespace evcar
