#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evcar/continuation.hpp"
#include "evcar/model.hpp"
#include "evcar/shooting.hpp"

namespace evcar {

/// Dense evaluator of a solved structure across its arcs; at a junction the
/// later (post-jump) arc wins.
class ExtremalPath {
 public:
  static std::optional<ExtremalPath> build(const ModelConstants& mc, StructureId st,
                                           const VecX& y,
                                           const FlowOptions& flow = {});
  double tf() const { return tf_; }
  int arcs() const { return static_cast<int>(spans_.size()); }
  std::pair<double, double> arc_span(int i) const { return spans_[i]; }
  HamiltonianId arc_field(int i) const { return fields_[i]; }
  Vec6 eval(double t) const;

 private:
  double tf_ = 0.0;
  std::vector<std::pair<double, double>> spans_;
  std::vector<HamiltonianId> fields_;
  std::vector<DenseFlow> dense_;
};

/// Backward sweep of the switching function over the terminal manifold,
/// establishing that the single positive bang is optimal: no zero of Phi may
/// occur strictly before the endpoint on any backward extremal.
struct GammaPlusReport {
  int grid_n = 0;
  double tbar_f = 0.0;
  int zero_crossings = 0;
  double min_abs_phi = 0.0;
  int failed_integrations = 0;
  double runtime_seconds = 0.0;
};
GammaPlusReport verify_gamma_plus(const CarParams& car, const Bounds& bounds,
                                  int grid_n = 50, const FlowOptions& flow = {},
                                  int threads = 0);

/// Structure hand-off seeds at the limit bounds. Each builds the new unknown
/// vector from the predecessor's solution; a Newton correction finishes the
/// job. See the leg drivers for the contexts in which they apply.
VecX seed_s2_from_s1_contact(const ModelConstants& mc, const VecX& y1,
                             const FlowOptions& flow = {});
VecX seed_s3_from_s2_contact(const ModelConstants& mc, const VecX& y2,
                             const FlowOptions& flow = {});
VecX seed_s4_from_s3_limit(const ModelConstants& mc, const VecX& y3);
VecX seed_s5_from_s4_limit(const VecX& y4);

struct LegResult {
  std::string name;
  StructureId structure = StructureId::S1;
  std::vector<PathPoint> points;
  std::optional<Event> event;
  VecX y_end;
  double lambda_end = 0.0;
  double end_residual = 0.0;
  double max_drift = 0.0;
};

/// Pointwise agreement of two solved extremals at a common bound value.
struct HandoffCheck {
  std::string name;
  double lambda = 0.0;
  double max_state_mismatch = 0.0;
  double max_costate_mismatch = 0.0;
  double max_costate_mismatch_after = 0.0;  // after the junction time
  double junction_time = 0.0;
};
HandoffCheck compare_extremals(const ModelConstants& mc, StructureId st_old,
                               const VecX& y_old, StructureId st_new,
                               const VecX& y_new, double junction_time,
                               const FlowOptions& flow = {}, int samples = 400);

struct ScenarioOptions {
  FlowOptions flow{};
  NewtonOptions newton{};
  double adm_tol = 1e-6;
  double drift_ceiling = 1e-4;
  double event_lambda_tol = 1e-4;
  double vmax_stop = 10.0;
  bool record_admissibility = true;
};

struct ImaxLegReport {
  SolveReport sol_1100;          // S1 at (1100, 110)
  double imax_c1 = 0.0;          // first contact with the current bound
  SolveReport sol_s2_limit;      // S2 at (imax_c1, 110)
  SolveReport sol_150;           // S2 at (150, 110)
  LegResult h1, h2a;
  HandoffCheck handoff_h1_h2a;
};
ImaxLegReport run_imax_leg(const CarParams& car, const ScenarioOptions& opts = {});

struct VmaxLegReport {
  double vmax_c3 = 0.0;
  double vmax_gamma_c3 = 0.0;
  double vmax_gamma_c3_oracle = 0.0;  // scalar root of u_c3 = 1
  double vmax_plus = 0.0;
  SolveReport sol_s3;   // S3 at (150, vmax_c3)
  SolveReport sol_s4;   // S4 at (150, vmax_gamma_c3)
  SolveReport sol_s5;   // S5 at (150, vmax_plus)
  SolveReport sol_v10;  // S5 at (150, vmax_stop)
  LegResult h2b, h3, h4, h5;
  HandoffCheck handoff_h2b_h3, handoff_h3_h4, handoff_h4_h5;
};
VmaxLegReport run_vmax_leg(const CarParams& car, const SolveReport& sol_150,
                           const ScenarioOptions& opts = {});

/// One row of the bound-sweep summary table.
struct SliceRow {
  double lambda = 0.0;
  StructureId structure = StructureId::S1;
  double tf = 0.0;
  std::vector<std::pair<std::string, double>> times;
  std::vector<std::pair<std::string, double>> jumps;
  bool admissible = true;
};

struct SliceDiagnostics {
  double tf_monotonicity_violation = 0.0;  // tf must grow as the bound shrinks
  double h2b_arc_length_variation = 0.0;   // t2 - t1 constant along h2b
  double h3_arc_length_variation = 0.0;    // t2 - t1 constant along h3
};

struct SliceReport {
  std::vector<SliceRow> rows;
  SliceDiagnostics diagnostics;
};
SliceReport slice_report(const VmaxLegReport& leg);

struct ScenarioResult {
  CarParams car;
  ImaxLegReport imax_leg;
  VmaxLegReport vmax_leg;
  SliceReport slice;
  double runtime_seconds = 0.0;
};
ScenarioResult run_scenario(const CarParams& car, const ScenarioOptions& opts = {});

/// Writes milestones.json, slice.csv, per-milestone trajectory CSVs and the
/// per-leg path CSVs under dir.
void write_scenario_outputs(const ScenarioResult& result, const std::string& dir);

void write_slice_csv(std::ostream& os, const SliceReport& report);
nlohmann::json milestones_to_json(const ScenarioResult& result);

}  // namespace evcar
