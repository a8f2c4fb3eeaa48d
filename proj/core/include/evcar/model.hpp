#pragma once

#include <array>
#include <string>

#include <json.hpp>

#include "evcar/types.hpp"

namespace evcar {

/// Physical parameters of the car, SI units except where noted.
struct CarParams {
  double Lm = 0.05;      ///< rotor inductance (H)
  double Rm = 0.03;      ///< inductor resistance (ohm)
  double Km = 0.27;      ///< motor torque coefficient
  double Valim = 150.0;  ///< battery voltage (V)
  double r = 0.33;       ///< wheel radius (m)
  double Kr = 10.0;      ///< reduction coefficient
  double g = 9.81;       ///< gravity (m/s^2)
  double Kf = 0.03;      ///< friction coefficient
  double M = 250.0;      ///< total mass (kg)
  double rho = 1.293;    ///< air density (kg/m^3)
  double S = 2.0;        ///< frontal surface (m^2)
  double Cx = 0.4;       ///< aerodynamic coefficient
  double Rbat = 0.05;    ///< battery resistance (ohm)

  /// Reference electric solar car.
  static CarParams solar_car() { return CarParams{}; }
};

/// Bounds of the problem instance. v_max is in km/h, the angular-velocity
/// bound is derived from it.
struct Bounds {
  double i_max = 1100.0;   ///< maximal current (A)
  double alpha_f = 100.0;  ///< target position (m)
  double v_max = 110.0;    ///< maximal linear velocity (km/h)

  double omega_max(const CarParams& car) const {
    return v_max * car.Kr / (3.6 * car.r);
  }
};

/// Normalized model: the parameter vector w and the seven derived constants
/// that fully define the dynamics in normalized coordinates.
struct ModelConstants {
  std::array<double, 12> w{};  // (1/Lm, Rm, Km, Valim, r/Kr, g Kf, 1/M, rho S Cx / 2, Rbat, i_max, alpha_f, omega_max)
  double k1 = 0, k2 = 0, k3 = 0, k4 = 0, k5 = 0, k6 = 0, k7 = 0;
  double i_max = 0;
  double alpha_f = 0;
  double v_max = 0;      // km/h
  double omega_max = 0;  // rad/s
  bool k456_positive = false;  // k4 + k5 + k6 > 0, makes u_c1 strictly increasing
};

/// Builds the normalized constants. Throws std::invalid_argument naming the
/// offending field when an input is not strictly positive.
ModelConstants normalize(const CarParams& car, const Bounds& bounds);

/// Drift, control field and the nonzero Lie brackets at x. F1, F01 and F001
/// do not depend on x except for the x3 term of F001.
struct FieldValues {
  Vec3 F0;
  Vec3 F1;
  Vec3 F01;
  Vec3 F001;
  Vec3 F10001;
};
FieldValues fields(const ModelConstants& mc, const Vec3& x);

/// State-constraint values: c1 = x1 - 1, c3 = x3 - 1 and the Lie derivative
/// F0.c3 (the first time-derivative of c3 along the drift).
struct ConstraintValues {
  double c1;
  double c3;
  double F0c3;
};
ConstraintValues constraints(const ModelConstants& mc, const Vec3& x);

/// Feedback controls on the constraint boundaries (upper bounds only).
/// u_c3 and x1_on_c3 are constant; u_c1 depends on x3.
struct BoundaryControls {
  double u_c1;
  double u_c3;
  double x1_on_c3;  // constant current level on a velocity-boundary arc
};
BoundaryControls boundary_controls(const ModelConstants& mc, const Vec3& x);

/// Velocity bound at which the boundary control u_c3 becomes admissible
/// (u_c3 = 1), found by bisection on omega_max in [1, 1e4] rad/s.
/// Throws std::runtime_error("no admissible-boundary threshold") when the
/// bracket has no sign change.
double vmax_gamma_c3(const CarParams& car, double i_max, double alpha_f);

/// JSON loading; keys follow the parameter table names exactly
/// (Lm, Rm, Km, Valim, r, Kr, g, Kf, M, rho, S, Cx, Rbat) and for the bounds
/// (imax, vmax, alphaf). Throws std::invalid_argument naming a bad key.
CarParams car_params_from_json(const nlohmann::json& j);
Bounds bounds_from_json(const nlohmann::json& j);
nlohmann::json car_params_to_json(const CarParams& car);
nlohmann::json bounds_to_json(const Bounds& bounds);

}  // namespace evcar
