#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "evcar/hamiltonians.hpp"
#include "evcar/model.hpp"
#include "evcar/types.hpp"

namespace evcar {

struct FlowOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 200000;
  bool with_stm = false;
  bool keep_dense = true;
};

struct FlowStats {
  long steps = 0;
  long rejected = 0;
};

/// Cubic Hermite interpolant over the accepted integrator steps. Only the
/// phase point is recorded, not the transition matrix.
class DenseFlow {
 public:
  void clear();
  void push(double t, const Vec6& z, const Vec6& f);
  bool empty() const { return ts_.empty(); }
  std::size_t nodes() const { return ts_.size(); }
  double t_begin() const { return ts_.front(); }
  double t_end() const { return ts_.back(); }

  Vec6 eval(double t) const;

  /// Maximum of g over [ta, tb], located by sampling each step interval and
  /// golden-section refinement around the best sample.
  struct Extremum {
    double t;
    double value;
  };
  Extremum max_of(const std::function<double(double, const Vec6&)>& g,
                  double ta, double tb) const;

 private:
  std::size_t segment_for(double t) const;
  std::vector<double> ts_;
  std::vector<Vec6> zs_;
  std::vector<Vec6> fs_;
};

struct FlowResult {
  bool ok = false;
  std::string error;
  double t_reached = 0.0;
  PhasePoint zT;
  Mat6 stm = Mat6::Identity();  // dz(t1)/dz(t0) when requested
  FlowStats stats;
  DenseFlow dense;
};

/// Exponential mapping: integrates the chosen Hamiltonian field from z0 over
/// [t0, t1]; t1 < t0 integrates backward. On failure ok is false and
/// t_reached holds the last time attained.
FlowResult expmap(const ModelConstants& mc, HamiltonianId id, const PhasePoint& z0,
                  double t0, double t1, const FlowOptions& opts = {});

/// Joint flow of the phase point and the variational system. Returns the
/// transported direction stm * dz0 together with the full transition matrix.
struct VarFlowResult {
  bool ok = false;
  std::string error;
  double t_reached = 0.0;
  PhasePoint zT;
  Vec6 dzT = Vec6::Zero();
  Mat6 stm = Mat6::Identity();
  FlowStats stats;
  DenseFlow dense;
};
VarFlowResult expmap_var(const ModelConstants& mc, HamiltonianId id,
                         const PhasePoint& z0, const Vec6& dz0, double t0,
                         double t1, const FlowOptions& opts = {});

/// One sample of a trajectory dump; u, eta and the arc label come from the
/// caller's arc context.
struct TrajectoryRow {
  double t;
  Vec6 z;
  double u;
  double eta;
  std::string arc;
};

/// CSV with columns t,x1,x2,x3,p1,p2,p3,u,eta,arc.
void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows);

}  // namespace evcar
