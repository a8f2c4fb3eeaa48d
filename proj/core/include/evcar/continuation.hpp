#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcar/model.hpp"
#include "evcar/nlsolve.hpp"
#include "evcar/shooting.hpp"
#include "evcar/types.hpp"

namespace evcar {

/// A homotopy h(y, lambda) = 0 followed by arclength continuation. The
/// evaluation callbacks return false when the point cannot be evaluated.
/// lambda_scale balances the lambda axis against y in arclength; tangents are
/// unit vectors in (y, lambda/lambda_scale) coordinates.
struct Homotopy {
  int dim = 0;
  std::string name;
  double lambda_scale = 1.0;
  std::function<bool(const VecX& y, double lambda, VecX& out)> eval;
  std::function<bool(const VecX& y, double lambda, VecX& r, MatX& jac)> jac_y;
  /// Optional analytic d h / d lambda; central finite differences otherwise.
  std::function<bool(const VecX& y, double lambda, VecX& out)> jac_lambda;
  /// Optional admissibility predicate recorded along the path.
  std::function<bool(const VecX& y, double lambda)> admissible;
  std::vector<std::string> component_names;  // defaults to y0..yN
};

/// Which bound the homotopy parameter replaces when the shooting system is
/// rebuilt at lambda.
enum class HomotopyParam { IMax, VMax };

Homotopy make_shooting_homotopy(const CarParams& car, const Bounds& base,
                                StructureId st, HomotopyParam param,
                                std::string name, const FlowOptions& flow = {});

/// Scalar monitor whose sign change along the path marks an admissibility
/// event.
struct Monitor {
  std::string name;
  std::function<double(const VecX& y, double lambda)> value;
};

Monitor monitor_max_c1(const CarParams& car, const Bounds& base, StructureId st,
                       HomotopyParam param, const FlowOptions& flow = {});
Monitor monitor_max_c3(const CarParams& car, const Bounds& base, StructureId st,
                       HomotopyParam param, const FlowOptions& flow = {});
/// t(slot_hi) - t(slot_lo) by slice name, e.g. arc length t3 - t2.
Monitor monitor_arc_length(StructureId st, const std::string& t_hi,
                           const std::string& t_lo);
Monitor monitor_jump(StructureId st, const std::string& nu_name);
/// u_c3(lambda) - 1; depends on lambda only.
Monitor monitor_uc3_admissible(const CarParams& car, const Bounds& base,
                               HomotopyParam param);
/// Minimum of the switching function over the interior of a bang arc
/// (sign-flipped for negative bangs).
Monitor monitor_phi_extremum(const CarParams& car, const Bounds& base,
                             StructureId st, HomotopyParam param, int arc_index,
                             const FlowOptions& flow = {});

struct PathPoint {
  VecX y;
  double lambda = 0.0;
  double s = 0.0;
  VecX tangent;  // unit, in (y, lambda/scale) coordinates
  double residual = 0.0;
  bool admissible = true;
};

struct Event {
  std::string kind;
  double lambda = 0.0;
  VecX y;
};

struct FollowOptions {
  double ds0 = 0.05;
  double ds_min = 1e-7;
  double ds_max = 0.25;
  int direction = -1;  // sign of d lambda / ds at the start
  std::optional<double> lambda_target;
  std::vector<Monitor> monitors;
  bool per_step_correction = false;  // paths are followed without correction
  double drift_ceiling = 1e-4;
  double event_lambda_tol = 1e-4;
  bool record_admissibility = true;
  NewtonOptions corrector{};
  int max_points = 20000;
};

struct FollowResult {
  bool ok = false;
  std::string message;
  std::vector<PathPoint> points;
  std::optional<Event> event;
  VecX y_end;             // Newton-corrected endpoint
  double lambda_end = 0.0;
  double end_residual = 0.0;
  double max_drift = 0.0;  // largest uncorrected |h| seen along the path
};

/// Unit tangent of the zero path: kernel vector of [dh/dy | scale*dh/dlambda],
/// oriented along prev_tangent (or along the requested lambda direction when
/// there is none). Returns false on rank deficiency.
bool tangent(const Homotopy& h, const VecX& y, double lambda,
             const VecX* prev_tangent, int lambda_direction, VecX& out,
             std::string* error = nullptr);

/// Newton correction of y at fixed lambda.
NewtonResult correct(const Homotopy& h, const VecX& y, double lambda,
                     const NewtonOptions& opts = {});

/// Integrates the arclength differential system with RK4 and adaptive steps,
/// recording samples until the lambda target or an admissibility event.
FollowResult follow(const Homotopy& h, const VecX& y0, double lambda0,
                    const FollowOptions& opts = {});

/// Bisection on lambda between two path samples bracketing a monitor sign
/// change; every probe re-solves the system at fixed lambda.
std::optional<Event> detect_event(const Homotopy& h, const Monitor& monitor,
                                  const PathPoint& lo, const PathPoint& hi,
                                  double lambda_tol = 1e-4,
                                  const NewtonOptions& corrector = {});

void write_path_csv(std::ostream& os, const Homotopy& h,
                    const std::vector<PathPoint>& points);
nlohmann::json events_to_json(const std::vector<Event>& events);

}  // namespace evcar
