#include "evcar/nlsolve.hpp"

#include <cmath>

namespace evcar {

NewtonResult newton_solve(const ResidualFn& residual, const JacobianFn& jacobian,
                          VecX y0, const NewtonOptions& opts) {
  NewtonResult res;
  res.y = std::move(y0);

  VecX r;
  if (!residual(res.y, r)) {
    res.message = "residual evaluation failed at the initial point";
    res.residual_norm = std::numeric_limits<double>::infinity();
    return res;
  }
  res.residual_norm = r.norm();
  res.residual_history.push_back(res.residual_norm);

  VecX best_y = res.y;
  double best_norm = res.residual_norm;

  for (int it = 0; it < opts.max_iter; ++it) {
    if (res.residual_norm <= opts.tol) {
      res.converged = true;
      res.iterations = it;
      return res;
    }

    VecX r_jac;
    MatX J;
    if (!jacobian(res.y, r_jac, J)) {
      res.message = "jacobian evaluation failed";
      break;
    }

    VecX d = J.partialPivLu().solve(-r_jac);
    const double lin_res = (J * d + r_jac).norm();
    if (!d.allFinite() || lin_res > 1e-6 * std::max(1.0, r_jac.norm())) {
      d = J.colPivHouseholderQr().solve(-r_jac);
      if (!d.allFinite()) {
        res.message = "singular Jacobian";
        break;
      }
    }

    // Backtracking on the residual norm.
    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= opts.step_floor) {
      VecX y_try = res.y + alpha * d;
      VecX r_try;
      if (residual(y_try, r_try) && r_try.allFinite()) {
        const double n_try = r_try.norm();
        if (n_try < (1.0 - 1e-4 * alpha) * res.residual_norm) {
          res.y = std::move(y_try);
          r = std::move(r_try);
          res.residual_norm = n_try;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Levenberg-Marquardt fallback for nearly singular Jacobians.
      const MatX JtJ = J.transpose() * J;
      const VecX Jtr = J.transpose() * r_jac;
      const double scale = JtJ.diagonal().maxCoeff();
      for (double mu = 1e-10 * scale; mu <= 1e2 * scale; mu *= 100.0) {
        MatX A = JtJ;
        A.diagonal().array() += mu;
        const VecX d_lm = A.ldlt().solve(-Jtr);
        if (!d_lm.allFinite()) continue;
        VecX y_try = res.y + d_lm;
        VecX r_try;
        if (residual(y_try, r_try) && r_try.allFinite() &&
            r_try.norm() < (1.0 - 1e-6) * res.residual_norm) {
          res.y = std::move(y_try);
          r = std::move(r_try);
          res.residual_norm = r.norm();
          accepted = true;
          break;
        }
      }
    }
    res.iterations = it + 1;
    if (!accepted) {
      res.message = "line search stalled";
      break;
    }
    res.residual_history.push_back(res.residual_norm);
    if (res.residual_norm < best_norm) {
      best_norm = res.residual_norm;
      best_y = res.y;
    }
  }

  if (res.residual_norm <= opts.tol) {
    res.converged = true;
    return res;
  }
  if (best_norm < res.residual_norm) {
    res.y = best_y;
    res.residual_norm = best_norm;
  }
  if (res.message.empty()) res.message = "max iterations reached";
  return res;
}

}  // namespace evcar
