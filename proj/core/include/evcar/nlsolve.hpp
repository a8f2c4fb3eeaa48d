#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evcar/types.hpp"

namespace evcar {

struct NewtonOptions {
  double tol = 1e-8;  // on the residual 2-norm
  int max_iter = 100;
  double step_floor = 1e-14;
};

struct NewtonResult {
  bool converged = false;
  VecX y;
  double residual_norm = 0.0;
  int iterations = 0;
  std::string message;
  std::vector<double> residual_history;  // norm after each accepted step
};

/// Residual evaluation; returns false when the point cannot be evaluated
/// (e.g. an integration failure), which the solver treats as a rejected step.
using ResidualFn = std::function<bool(const VecX&, VecX&)>;
using JacobianFn = std::function<bool(const VecX&, VecX&, MatX&)>;

/// Damped Newton with LU solve (QR fallback on ill-conditioned systems) and
/// backtracking line search on the residual norm. Returns the best iterate
/// when it fails to converge.
NewtonResult newton_solve(const ResidualFn& residual, const JacobianFn& jacobian,
                          VecX y0, const NewtonOptions& opts = {});

}  // namespace evcar
