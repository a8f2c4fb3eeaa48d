#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcar/flow.hpp"
#include "evcar/hamiltonians.hpp"
#include "evcar/model.hpp"
#include "evcar/nlsolve.hpp"
#include "evcar/types.hpp"

namespace evcar {

/// The five shooting layouts. The arc sequences are
///   S1: g+            S2: g+ gc1 g+          S3: g+ gc1 g+ g- g+ (c3 touch)
///   S4: g+ gc1 g+ g- gc3                     S5: g+ gc1 g- gc3
enum class StructureId { S1, S2, S3, S4, S5 };

const char* to_string(StructureId id);
std::optional<StructureId> structure_from_string(const std::string& s);

/// One flow segment of a multiple-shooting layout.
struct ArcSpec {
  HamiltonianId field;
  int start_node;       // -1: initial point (x0, p0), else 0-based node index
  int end_node;         // -1: final arc (endpoint conditions), else node index
  int t_begin_slot;     // -1: fixed t = 0
  int t_end_slot;       // always a slot (tf for the final arc)
  int jump_slot = -1;   // costate jump applied to the arc start, -1: none
  int jump_axis = -1;   // 0: c1 (p1 jump), 2: c3 (p3 jump)
  const char* label;    // g+, g-, gc1, gc3
};

/// Pointwise condition evaluated at an interior node.
struct InteriorCond {
  enum class Kind { C1, SwitchFn, UC1, C3, F0C3 };
  int node;
  Kind kind;
};

/// Unknown-vector layout of a structure: named slices over a flat vector.
class Layout {
 public:
  static const Layout& of(StructureId id);

  StructureId id() const { return id_; }
  int dim() const { return dim_; }
  int nodes() const { return static_cast<int>(node_offsets_.size()); }
  const std::vector<ArcSpec>& arcs() const { return arcs_; }
  const std::vector<InteriorCond>& conds() const { return conds_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<int>& nu_slots() const { return nu_slots_; }
  const std::vector<int>& time_slots() const { return time_slots_; }

  int node_offset(int i) const { return node_offsets_[i]; }
  Vec3 p0(const VecX& y) const { return y.segment<3>(0); }
  double tf(const VecX& y) const { return y(3); }
  double time(const VecX& y, int slot) const { return slot < 0 ? 0.0 : y(slot); }
  Vec6 node(const VecX& y, int i) const { return y.segment<6>(node_offsets_[i]); }

 private:
  StructureId id_;
  int dim_ = 0;
  std::vector<ArcSpec> arcs_;
  std::vector<InteriorCond> conds_;
  std::vector<int> node_offsets_;
  std::vector<int> nu_slots_;
  std::vector<int> time_slots_;  // t1, t2, ... in arc order (excluding 0 and tf)
  std::vector<std::string> names_;

  friend Layout make_layout(StructureId);
};

/// Issue raised inside an evaluation (integration failure within an arc).
struct ShootingIssue {
  int arc_index = -1;
  double t_reached = 0.0;
  std::string what;
};

/// Shooting residual per the multiple-shooting layout: interior conditions,
/// endpoint conditions (pi(z(tf)) = (1,0,0), H = 1) and matching conditions.
/// The non-throwing variants return false on integration failure.
bool try_eval_shooting(const ModelConstants& mc, StructureId st, const VecX& y,
                       VecX& out, const FlowOptions& flow = {},
                       ShootingIssue* issue = nullptr);
VecX eval_shooting(const ModelConstants& mc, StructureId st, const VecX& y,
                   const FlowOptions& flow = {});

/// Jacobian assembled from transition-matrix blocks of the variational flow,
/// field values for the time columns and unit blocks for node unknowns.
bool try_shooting_jacobian(const ModelConstants& mc, StructureId st, const VecX& y,
                           VecX& residual, MatX& jac, const FlowOptions& flow = {},
                           ShootingIssue* issue = nullptr);
MatX shooting_jacobian(const ModelConstants& mc, StructureId st, const VecX& y,
                       const FlowOptions& flow = {});

/// Per-arc diagnostics of a candidate extremal.
struct ArcDiagnostics {
  std::string label;
  double t_begin = 0.0;
  double t_end = 0.0;
  bool empty = false;
  double max_c1 = 0.0;
  double max_c3 = 0.0;
  double min_signed_phi = 0.0;  // min of s_b * Phi over the arc interior (bang arcs)
  double max_abs_uc = 0.0;      // boundary arcs
  double max_eta = 0.0;         // boundary arcs: multiplier must stay <= 0
};

struct AdmissibilityReport {
  bool admissible = false;
  bool time_ordering_ok = true;
  bool constraints_ok = true;
  bool bang_signs_ok = true;
  bool boundary_controls_ok = true;
  bool multipliers_ok = true;
  bool jumps_ok = true;
  std::vector<ArcDiagnostics> arcs;
  std::vector<double> jumps;
  std::vector<std::string> violations;
  std::string structure_change_hint;  // set when an arc collapses to zero length
};

/// A posteriori verification that a shooting zero is a BC-extremal.
AdmissibilityReport check_admissible(const ModelConstants& mc, StructureId st,
                                     const VecX& y, double tol_c = 1e-6,
                                     const FlowOptions& flow_opts = {});

struct SolveOptions {
  NewtonOptions newton{};
  FlowOptions flow{};
  double adm_tol = 1e-6;
};

struct SolveReport {
  StructureId structure = StructureId::S1;
  bool converged = false;
  double residual_norm = 0.0;
  int iterations = 0;
  VecX y;
  AdmissibilityReport admissibility;
  std::string message;
  std::vector<double> residual_history;
  double i_max = 0.0;
  double v_max = 0.0;
  double alpha_f = 0.0;
};

/// Newton solve of the shooting system from y_init.
SolveReport solve(const ModelConstants& mc, StructureId st, const VecX& y_init,
                  const SolveOptions& opts = {});

/// Multi-start S1 solve over the seed grid p0 in {0.1,1,5}^3, tf in
/// {2,5,10,20}; returns the first admissible converged zero.
SolveReport solve_s1_multistart(const ModelConstants& mc, const SolveOptions& opts = {});

/// Dense trajectory of a solved structure with per-arc control/multiplier
/// context, ready for CSV export.
std::vector<TrajectoryRow> trajectory_rows(const ModelConstants& mc, StructureId st,
                                           const VecX& y, int samples_per_arc = 200,
                                           const FlowOptions& flow_opts = {});

nlohmann::json solve_report_to_json(const SolveReport& report);
SolveReport solve_report_from_json(const nlohmann::json& j);

}  // namespace evcar
