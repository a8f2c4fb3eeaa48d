#include "evcar/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace evcar {

namespace {

Bounds bounds_with(const Bounds& base, HomotopyParam param, double lambda) {
  Bounds b = base;
  if (param == HomotopyParam::IMax)
    b.i_max = lambda;
  else
    b.v_max = lambda;
  return b;
}

// Maximum of a constraint over the whole trajectory of a solved structure.
double max_constraint(const ModelConstants& mc, StructureId st, const VecX& y,
                      int axis, const FlowOptions& flow) {
  const Layout& L = Layout::of(st);
  FlowOptions fo = flow;
  fo.keep_dense = true;
  fo.with_stm = false;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& arc : L.arcs()) {
    const double ta = L.time(y, arc.t_begin_slot);
    const double tb = L.time(y, arc.t_end_slot);
    if (tb - ta < 1e-12) continue;
    Vec6 s;
    if (arc.start_node < 0) {
      s.head<3>().setZero();
      s.tail<3>() = L.p0(y);
    } else {
      s = L.node(y, arc.start_node);
    }
    if (arc.jump_slot >= 0) s(3 + arc.jump_axis) -= y(arc.jump_slot);
    const auto res = expmap(mc, arc.field, PhasePoint::from_flat(s), ta, tb, fo);
    if (!res.ok) return std::numeric_limits<double>::quiet_NaN();
    const auto m = res.dense.max_of(
        [axis](double, const Vec6& z) { return z(axis) - 1.0; }, ta, tb);
    best = std::max(best, m.value);
  }
  return best;
}

int slot_by_name(const Layout& L, const std::string& name) {
  const auto& names = L.names();
  for (int i = 0; i < static_cast<int>(names.size()); ++i) {
    if (names[i] == name) return i;
  }
  throw std::invalid_argument("layout " + std::string(to_string(L.id())) +
                              " has no slice named '" + name + "'");
}

}  // namespace

Homotopy make_shooting_homotopy(const CarParams& car, const Bounds& base,
                                StructureId st, HomotopyParam param,
                                std::string name, const FlowOptions& flow) {
  Homotopy h;
  h.dim = Layout::of(st).dim();
  h.name = std::move(name);
  h.component_names = Layout::of(st).names();
  h.eval = [car, base, st, param, flow](const VecX& y, double lambda, VecX& out) {
    if (!(lambda > 0.0)) return false;
    const ModelConstants mc = normalize(car, bounds_with(base, param, lambda));
    return try_eval_shooting(mc, st, y, out, flow);
  };
  h.jac_y = [car, base, st, param, flow](const VecX& y, double lambda, VecX& r,
                                         MatX& J) {
    if (!(lambda > 0.0)) return false;
    const ModelConstants mc = normalize(car, bounds_with(base, param, lambda));
    return try_shooting_jacobian(mc, st, y, r, J, flow);
  };
  h.admissible = [car, base, st, param, flow](const VecX& y, double lambda) {
    if (!(lambda > 0.0)) return false;
    const ModelConstants mc = normalize(car, bounds_with(base, param, lambda));
    return check_admissible(mc, st, y, 1e-6, flow).admissible;
  };
  return h;
}

Monitor monitor_max_c1(const CarParams& car, const Bounds& base, StructureId st,
                       HomotopyParam param, const FlowOptions& flow) {
  return Monitor{"max_c1", [car, base, st, param, flow](const VecX& y, double lambda) {
                   const ModelConstants mc =
                       normalize(car, bounds_with(base, param, lambda));
                   return max_constraint(mc, st, y, 0, flow);
                 }};
}

Monitor monitor_max_c3(const CarParams& car, const Bounds& base, StructureId st,
                       HomotopyParam param, const FlowOptions& flow) {
  return Monitor{"max_c3", [car, base, st, param, flow](const VecX& y, double lambda) {
                   const ModelConstants mc =
                       normalize(car, bounds_with(base, param, lambda));
                   return max_constraint(mc, st, y, 2, flow);
                 }};
}

Monitor monitor_arc_length(StructureId st, const std::string& t_hi,
                           const std::string& t_lo) {
  const Layout& L = Layout::of(st);
  const int hi = slot_by_name(L, t_hi);
  const int lo = slot_by_name(L, t_lo);
  return Monitor{"arc_length(" + t_hi + "-" + t_lo + ")",
                 [hi, lo](const VecX& y, double) { return y(hi) - y(lo); }};
}

Monitor monitor_jump(StructureId st, const std::string& nu_name) {
  const int slot = slot_by_name(Layout::of(st), nu_name);
  return Monitor{"jump(" + nu_name + ")",
                 [slot](const VecX& y, double) { return y(slot); }};
}

Monitor monitor_uc3_admissible(const CarParams& car, const Bounds& base,
                               HomotopyParam param) {
  return Monitor{"uc3-1", [car, base, param](const VecX&, double lambda) {
                   const ModelConstants mc =
                       normalize(car, bounds_with(base, param, lambda));
                   return boundary_controls(mc, Vec3::Zero()).u_c3 - 1.0;
                 }};
}

Monitor monitor_phi_extremum(const CarParams& car, const Bounds& base,
                             StructureId st, HomotopyParam param, int arc_index,
                             const FlowOptions& flow) {
  return Monitor{
      "phi_extremum(arc " + std::to_string(arc_index) + ")",
      [car, base, st, param, arc_index, flow](const VecX& y, double lambda) {
        const ModelConstants mc = normalize(car, bounds_with(base, param, lambda));
        const Layout& L = Layout::of(st);
        const auto& arc = L.arcs()[arc_index];
        const double s_b = (arc.field == HamiltonianId::HMinus) ? -1.0 : 1.0;
        const double ta = L.time(y, arc.t_begin_slot);
        const double tb = L.time(y, arc.t_end_slot);
        Vec6 s;
        if (arc.start_node < 0) {
          s.head<3>().setZero();
          s.tail<3>() = L.p0(y);
        } else {
          s = L.node(y, arc.start_node);
        }
        if (arc.jump_slot >= 0) s(3 + arc.jump_axis) -= y(arc.jump_slot);
        FlowOptions fo = flow;
        fo.keep_dense = true;
        const auto res = expmap(mc, arc.field, PhasePoint::from_flat(s), ta, tb, fo);
        if (!res.ok) return std::numeric_limits<double>::quiet_NaN();
        // Interior minimum of s_b * Phi: junction endpoints excluded.
        const double margin = 0.02 * (tb - ta);
        const auto ext = res.dense.max_of(
            [&mc, s_b](double, const Vec6& z) { return -s_b * mc.k7 * z(3); },
            ta + margin, tb - margin);
        return -ext.value;
      }};
}

NewtonResult correct(const Homotopy& h, const VecX& y, double lambda,
                     const NewtonOptions& opts) {
  auto res_fn = [&](const VecX& v, VecX& out) { return h.eval(v, lambda, out); };
  auto jac_fn = [&](const VecX& v, VecX& r, MatX& J) {
    return h.jac_y(v, lambda, r, J);
  };
  return newton_solve(res_fn, jac_fn, y, opts);
}

namespace {

bool lambda_column(const Homotopy& h, const VecX& y, double lambda, VecX& out) {
  if (h.jac_lambda) return h.jac_lambda(y, lambda, out);
  // Wide central step: the evaluation noise floor sits at the integration
  // tolerance, and the residual is nearly affine in lambda at this scale.
  const double dl = 1e-4 * std::max(1.0, std::abs(lambda));
  VecX hi, lo;
  if (!h.eval(y, lambda + dl, hi) || !h.eval(y, lambda - dl, lo)) return false;
  out = (hi - lo) / (2.0 * dl);
  return true;
}

}  // namespace

bool tangent(const Homotopy& h, const VecX& y, double lambda,
             const VecX* prev_tangent, int lambda_direction, VecX& out,
             std::string* error) {
  VecX r, dl;
  MatX Jy;
  if (!h.jac_y(y, lambda, r, Jy) || !lambda_column(h, y, lambda, dl)) {
    if (error) *error = "tangent: evaluation failed";
    return false;
  }
  MatX B(h.dim, h.dim + 1);
  B.leftCols(h.dim) = Jy;
  B.col(h.dim) = dl * h.lambda_scale;

  Eigen::FullPivLU<MatX> lu(B);
  lu.setThreshold(1e-10);
  if (lu.rank() < h.dim) {
    if (error) *error = "singular point on path (rank-deficient bordered Jacobian)";
    return false;
  }
  MatX kernel = lu.kernel();
  if (kernel.cols() != 1) {
    if (error) *error = "singular point on path (kernel dimension > 1)";
    return false;
  }
  out = kernel.col(0);
  out.normalize();
  if (prev_tangent && prev_tangent->size() == out.size()) {
    if (prev_tangent->dot(out) < 0.0) out = -out;
  } else {
    if (lambda_direction * out(h.dim) < 0.0) out = -out;
  }
  return true;
}

std::optional<Event> detect_event(const Homotopy& h, const Monitor& monitor,
                                  const PathPoint& lo, const PathPoint& hi,
                                  double lambda_tol, const NewtonOptions& corrector) {
  double la = lo.lambda, lb = hi.lambda;
  VecX ya = lo.y, yb = hi.y;
  double va = monitor.value(ya, la);
  double vb = monitor.value(yb, lb);
  if (!std::isfinite(va) || !std::isfinite(vb) || va * vb > 0.0) {
    return std::nullopt;  // not a bracket
  }

  while (std::abs(lb - la) > lambda_tol) {
    const double lm = 0.5 * (la + lb);
    const VecX y_init = 0.5 * (ya + yb);
    const NewtonResult nr = correct(h, y_init, lm, corrector);
    if (!nr.converged) {
      // Failed probe: shrink toward the known-good side.
      lb = lm;
      continue;
    }
    const double vm = monitor.value(nr.y, lm);
    if (!std::isfinite(vm)) return std::nullopt;
    if (va * vm <= 0.0) {
      lb = lm;
      yb = nr.y;
      vb = vm;
    } else {
      la = lm;
      ya = nr.y;
      va = vm;
    }
  }

  Event ev;
  ev.kind = monitor.name;
  // Report the side that is still on the admissible branch of the monitor.
  ev.lambda = 0.5 * (la + lb);
  const NewtonResult nr = correct(h, 0.5 * (ya + yb), ev.lambda, corrector);
  ev.y = nr.converged ? nr.y : ya;
  if (!nr.converged) ev.lambda = la;
  return ev;
}

FollowResult follow(const Homotopy& h, const VecX& y0, double lambda0,
                    const FollowOptions& opts) {
  FollowResult out;

  auto residual_norm = [&](const VecX& y, double lambda) {
    VecX r;
    if (!h.eval(y, lambda, r)) return std::numeric_limits<double>::quiet_NaN();
    return r.norm();
  };

  VecX y = y0;
  double lambda = lambda0;
  double r0 = residual_norm(y, lambda);
  if (!(r0 <= opts.corrector.tol)) {
    const NewtonResult nr = correct(h, y, lambda, opts.corrector);
    if (!nr.converged) {
      out.message = "follow: starting point does not satisfy h = 0";
      return out;
    }
    y = nr.y;
    r0 = nr.residual_norm;
  }

  auto record = [&](double s, const VecX& yv, double lv, const VecX& tan,
                    double res) {
    PathPoint p;
    p.y = yv;
    p.lambda = lv;
    p.s = s;
    p.tangent = tan;
    p.residual = res;
    p.admissible = (opts.record_admissibility && h.admissible)
                       ? h.admissible(yv, lv)
                       : true;
    out.points.push_back(std::move(p));
  };

  VecX tan;
  std::string terr;
  if (!tangent(h, y, lambda, nullptr, opts.direction, tan, &terr)) {
    out.message = "follow: " + terr;
    return out;
  }
  record(0.0, y, lambda, tan, r0);
  out.max_drift = r0;

  std::vector<double> monitor_values(opts.monitors.size());
  for (std::size_t m = 0; m < opts.monitors.size(); ++m) {
    monitor_values[m] = opts.monitors[m].value(y, lambda);
  }

  double ds = opts.ds0;
  double s = 0.0;

  auto rk4_step = [&](const VecX& yc, double lc, const VecX& t1v, double step,
                      VecX& y_new, double& l_new, VecX& t_end) -> bool {
    auto eval_tan = [&](const VecX& yv, double lv, const VecX& prev, VecX& tv) {
      return tangent(h, yv, lv, &prev, opts.direction, tv, nullptr);
    };
    const int n = h.dim;
    VecX k2, k3, k4;
    VecX y2 = yc + 0.5 * step * t1v.head(n);
    double l2 = lc + 0.5 * step * t1v(n) * h.lambda_scale;
    if (!eval_tan(y2, l2, t1v, k2)) return false;
    VecX y3 = yc + 0.5 * step * k2.head(n);
    double l3 = lc + 0.5 * step * k2(n) * h.lambda_scale;
    if (!eval_tan(y3, l3, k2, k3)) return false;
    VecX y4 = yc + step * k3.head(n);
    double l4 = lc + step * k3(n) * h.lambda_scale;
    if (!eval_tan(y4, l4, k3, k4)) return false;
    const VecX incr = (t1v + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    y_new = yc + step * incr.head(n);
    l_new = lc + step * incr(n) * h.lambda_scale;
    return eval_tan(y_new, l_new, k4, t_end);
  };

  while (static_cast<int>(out.points.size()) < opts.max_points) {
    // Clip the step when approaching the lambda target.
    if (opts.lambda_target) {
      const double remaining =
          std::abs(*opts.lambda_target - lambda) / h.lambda_scale;
      const double dlds = std::abs(tan(h.dim));
      if (dlds > 1e-8 && remaining / dlds < ds) {
        ds = std::max(remaining / dlds, opts.ds_min);
      }
    }

    VecX y_new, tan_new;
    double lambda_new = lambda;
    bool ok = rk4_step(y, lambda, tan, ds, y_new, lambda_new, tan_new);
    double res_new = ok ? residual_norm(y_new, lambda_new)
                        : std::numeric_limits<double>::quiet_NaN();
    const bool drift_bad = !std::isfinite(res_new) ||
                           res_new > 0.8 * opts.drift_ceiling;
    const bool angle_bad = ok && tan.dot(tan_new) < 0.99;
    if (!ok || angle_bad || drift_bad) {
      if (ds > opts.ds_min) {
        ds = std::max(0.5 * ds, opts.ds_min);
        continue;
      }
      if (drift_bad && ok && opts.per_step_correction) {
        const NewtonResult nr = correct(h, y_new, lambda_new, opts.corrector);
        if (!nr.converged) {
          out.message = "follow: residual drift above ceiling";
          return out;
        }
        y_new = nr.y;
        res_new = nr.residual_norm;
      } else if (!ok) {
        out.message = "follow: tangent evaluation failed at minimal step";
        return out;
      } else if (drift_bad) {
        out.message = "follow: residual drift above ceiling";
        return out;
      }
    }
    if (opts.per_step_correction) {
      const NewtonResult nr = correct(h, y_new, lambda_new, opts.corrector);
      if (nr.converged) {
        y_new = nr.y;
        res_new = nr.residual_norm;
      }
    }

    s += ds;
    y = y_new;
    lambda = lambda_new;
    tan = tan_new;
    record(s, y, lambda, tan, res_new);
    out.max_drift = std::max(out.max_drift, res_new);

    // Replaces the overshoot sample by the corrected terminal point, so the
    // recorded path ends on the followed branch.
    auto finish_at = [&](const VecX& y_fin, double lambda_fin, double res_fin) {
      PathPoint& last = out.points.back();
      last.y = y_fin;
      last.lambda = lambda_fin;
      last.tangent = tan;
      last.residual = res_fin;
      last.admissible = (opts.record_admissibility && h.admissible)
                            ? h.admissible(y_fin, lambda_fin)
                            : true;
      out.y_end = y_fin;
      out.lambda_end = lambda_fin;
      out.end_residual = res_fin;
      out.ok = true;
    };

    // Monitor sign changes: localize and stop.
    for (std::size_t m = 0; m < opts.monitors.size(); ++m) {
      const double v = opts.monitors[m].value(y, lambda);
      const double v_prev = monitor_values[m];
      if (std::isfinite(v) && std::isfinite(v_prev) && v_prev * v < 0.0) {
        const auto& pts = out.points;
        auto ev = detect_event(h, opts.monitors[m], pts[pts.size() - 2],
                               pts.back(), opts.event_lambda_tol, opts.corrector);
        if (ev) {
          out.event = ev;
          finish_at(ev->y, ev->lambda, residual_norm(ev->y, ev->lambda));
          return out;
        }
      }
      monitor_values[m] = v;
    }

    // Lambda target reached or passed: correct exactly there.
    if (opts.lambda_target) {
      const double dir = (opts.direction < 0) ? -1.0 : 1.0;
      const double tol = 1e-9 * std::max(1.0, std::abs(*opts.lambda_target));
      if (dir * (lambda - *opts.lambda_target) >= -tol) {
        const NewtonResult nr = correct(h, y, *opts.lambda_target, opts.corrector);
        if (!nr.converged) {
          out.message = "follow: endpoint correction failed";
          return out;
        }
        finish_at(nr.y, *opts.lambda_target, nr.residual_norm);
        return out;
      }
    }

    // Step growth on smooth stretches.
    if (out.points.size() >= 2) {
      const auto& prev = out.points[out.points.size() - 2];
      if (prev.tangent.size() == tan.size() && prev.tangent.dot(tan) > 0.999) {
        ds = std::min(2.0 * ds, opts.ds_max);
      }
    }
  }
  out.message = "follow: maximum number of path points reached";
  return out;
}

void write_path_csv(std::ostream& os, const Homotopy& h,
                    const std::vector<PathPoint>& points) {
  os << "s,lambda";
  if (!h.component_names.empty()) {
    for (const auto& n : h.component_names) os << ',' << n;
  } else {
    for (int i = 0; i < h.dim; ++i) os << ",y" << i;
  }
  os << ",residual,admissible\n";
  os.precision(15);
  for (const auto& p : points) {
    os << p.s << ',' << p.lambda;
    for (int i = 0; i < p.y.size(); ++i) os << ',' << p.y(i);
    os << ',' << p.residual << ',' << (p.admissible ? 1 : 0) << '\n';
  }
}

nlohmann::json events_to_json(const std::vector<Event>& events) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : events) {
    arr.push_back({{"kind", e.kind},
                   {"lambda", e.lambda},
                   {"y", std::vector<double>(e.y.data(), e.y.data() + e.y.size())}});
  }
  return arr;
}

}  // namespace evcar
