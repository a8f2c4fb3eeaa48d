#include "evcar/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace evcar {

const char* to_string(StructureId id) {
  switch (id) {
    case StructureId::S1: return "s1";
    case StructureId::S2: return "s2";
    case StructureId::S3: return "s3";
    case StructureId::S4: return "s4";
    case StructureId::S5: return "s5";
  }
  return "?";
}

std::optional<StructureId> structure_from_string(const std::string& s) {
  if (s == "s1" || s == "S1") return StructureId::S1;
  if (s == "s2" || s == "S2") return StructureId::S2;
  if (s == "s3" || s == "S3") return StructureId::S3;
  if (s == "s4" || s == "S4") return StructureId::S4;
  if (s == "s5" || s == "S5") return StructureId::S5;
  return std::nullopt;
}

namespace {

using HId = HamiltonianId;
using Kind = InteriorCond::Kind;

void append_node_names(std::vector<std::string>& names, int node_1based) {
  static const char* comp[6] = {"x1", "x2", "x3", "p1", "p2", "p3"};
  for (int c = 0; c < 6; ++c) {
    names.push_back("z" + std::to_string(node_1based) + "_" + comp[c]);
  }
}

}  // namespace

Layout make_layout(StructureId id) {
  Layout L;
  L.id_ = id;
  L.names_ = {"p0_1", "p0_2", "p0_3", "tf"};
  constexpr int kTf = 3;
  switch (id) {
    case StructureId::S1: {
      L.dim_ = 4;
      L.arcs_ = {{HId::HPlus, -1, -1, -1, kTf, -1, -1, "g+"}};
      break;
    }
    case StructureId::S2: {
      // y = (p0, tf, t1, t2, nu2, z1, z2)
      L.dim_ = 19;
      const int t1 = 4, t2 = 5, nu2 = 6;
      L.node_offsets_ = {7, 13};
      L.time_slots_ = {t1, t2};
      L.nu_slots_ = {nu2};
      L.arcs_ = {{HId::HPlus, -1, 0, -1, t1, -1, -1, "g+"},
                 {HId::HC1, 0, 1, t1, t2, -1, -1, "gc1"},
                 {HId::HPlus, 1, -1, t2, kTf, nu2, 0, "g+"}};
      L.conds_ = {{0, Kind::C1}, {0, Kind::SwitchFn}, {1, Kind::UC1}};
      L.names_.insert(L.names_.end(), {"t1", "t2", "nu2"});
      append_node_names(L.names_, 1);
      append_node_names(L.names_, 2);
      break;
    }
    case StructureId::S3: {
      // y = (p0, tf, t1, t2, nu2, t3, t4, t5, nu5, z1..z5)
      L.dim_ = 41;
      const int t1 = 4, t2 = 5, nu2 = 6, t3 = 7, t4 = 8, t5 = 9, nu5 = 10;
      L.node_offsets_ = {11, 17, 23, 29, 35};
      L.time_slots_ = {t1, t2, t3, t4, t5};
      L.nu_slots_ = {nu2, nu5};
      L.arcs_ = {{HId::HPlus, -1, 0, -1, t1, -1, -1, "g+"},
                 {HId::HC1, 0, 1, t1, t2, -1, -1, "gc1"},
                 {HId::HPlus, 1, 2, t2, t3, nu2, 0, "g+"},
                 {HId::HMinus, 2, 3, t3, t4, -1, -1, "g-"},
                 {HId::HPlus, 3, 4, t4, t5, -1, -1, "g+"},
                 {HId::HPlus, 4, -1, t5, kTf, nu5, 2, "g+"}};
      L.conds_ = {{0, Kind::C1},      {0, Kind::SwitchFn}, {1, Kind::UC1},
                  {2, Kind::SwitchFn}, {3, Kind::SwitchFn}, {4, Kind::C3},
                  {4, Kind::F0C3}};
      L.names_.insert(L.names_.end(), {"t1", "t2", "nu2", "t3", "t4", "t5", "nu5"});
      for (int i = 1; i <= 5; ++i) append_node_names(L.names_, i);
      break;
    }
    case StructureId::S4: {
      // y = (p0, tf, t1, t2, nu2, t3, t4, nu4, z1..z4)
      L.dim_ = 34;
      const int t1 = 4, t2 = 5, nu2 = 6, t3 = 7, t4 = 8, nu4 = 9;
      L.node_offsets_ = {10, 16, 22, 28};
      L.time_slots_ = {t1, t2, t3, t4};
      L.nu_slots_ = {nu2, nu4};
      L.arcs_ = {{HId::HPlus, -1, 0, -1, t1, -1, -1, "g+"},
                 {HId::HC1, 0, 1, t1, t2, -1, -1, "gc1"},
                 {HId::HPlus, 1, 2, t2, t3, nu2, 0, "g+"},
                 {HId::HMinus, 2, 3, t3, t4, -1, -1, "g-"},
                 {HId::HC3, 3, -1, t4, kTf, nu4, 2, "gc3"}};
      L.conds_ = {{0, Kind::C1},       {0, Kind::SwitchFn}, {1, Kind::UC1},
                  {2, Kind::SwitchFn}, {3, Kind::C3},       {3, Kind::F0C3}};
      L.names_.insert(L.names_.end(), {"t1", "t2", "nu2", "t3", "t4", "nu4"});
      for (int i = 1; i <= 4; ++i) append_node_names(L.names_, i);
      break;
    }
    case StructureId::S5: {
      // y = (p0, tf, t1, t2, t3, nu3, z1..z3); the gc1 exit carries no jump
      // and no control-continuity condition since the next arc is g-.
      L.dim_ = 26;
      const int t1 = 4, t2 = 5, t3 = 6, nu3 = 7;
      L.node_offsets_ = {8, 14, 20};
      L.time_slots_ = {t1, t2, t3};
      L.nu_slots_ = {nu3};
      L.arcs_ = {{HId::HPlus, -1, 0, -1, t1, -1, -1, "g+"},
                 {HId::HC1, 0, 1, t1, t2, -1, -1, "gc1"},
                 {HId::HMinus, 1, 2, t2, t3, -1, -1, "g-"},
                 {HId::HC3, 2, -1, t3, kTf, nu3, 2, "gc3"}};
      L.conds_ = {{0, Kind::C1}, {0, Kind::SwitchFn}, {2, Kind::C3}, {2, Kind::F0C3}};
      L.names_.insert(L.names_.end(), {"t1", "t2", "t3", "nu3"});
      for (int i = 1; i <= 3; ++i) append_node_names(L.names_, i);
      break;
    }
  }
  return L;
}

const Layout& Layout::of(StructureId id) {
  static const std::map<StructureId, Layout> layouts = [] {
    std::map<StructureId, Layout> m;
    for (auto s : {StructureId::S1, StructureId::S2, StructureId::S3,
                   StructureId::S4, StructureId::S5}) {
      m.emplace(s, make_layout(s));
    }
    return m;
  }();
  return layouts.at(id);
}

namespace {

double cond_value(const ModelConstants& mc, Kind kind, const Vec6& z) {
  switch (kind) {
    case Kind::C1: return z(0) - 1.0;
    case Kind::SwitchFn: return mc.k7 * z(3);
    case Kind::UC1: return -(mc.k1 + mc.k2 * z(2)) / mc.k7 - 1.0;
    case Kind::C3: return z(2) - 1.0;
    case Kind::F0C3: return mc.k4 + mc.k5 * z(0) + mc.k6 * z(2) * z(2);
  }
  return 0.0;
}

Vec6 cond_gradient(const ModelConstants& mc, Kind kind, const Vec6& z) {
  Vec6 g = Vec6::Zero();
  switch (kind) {
    case Kind::C1: g(0) = 1.0; break;
    case Kind::SwitchFn: g(3) = mc.k7; break;
    case Kind::UC1: g(2) = -mc.k2 / mc.k7; break;
    case Kind::C3: g(2) = 1.0; break;
    case Kind::F0C3:
      g(0) = mc.k5;
      g(2) = 2.0 * mc.k6 * z(2);
      break;
  }
  return g;
}

Vec6 arc_start_point(const Layout& L, const ArcSpec& arc, const VecX& y) {
  Vec6 s;
  if (arc.start_node < 0) {
    s.head<3>().setZero();
    s.tail<3>() = L.p0(y);
  } else {
    s = L.node(y, arc.start_node);
  }
  if (arc.jump_slot >= 0) {
    // z+ = z - nu c'(x) on the costate slice; c' is the constant axis vector.
    s(3 + arc.jump_axis) -= y(arc.jump_slot);
  }
  return s;
}

// Gradient of the true Hamiltonian from the canonical field: dH/dx = -dp/dt,
// dH/dp = dx/dt.
Vec6 ham_gradient(const ModelConstants& mc, HamiltonianId id, const Vec6& z) {
  Vec6 f;
  ham_rhs(mc, id, z, f);
  Vec6 g;
  g.head<3>() = -f.tail<3>();
  g.tail<3>() = f.head<3>();
  return g;
}

void set_issue(ShootingIssue* issue, int arc, double t_reached, std::string what) {
  if (issue) {
    issue->arc_index = arc;
    issue->t_reached = t_reached;
    issue->what = std::move(what);
  }
}

}  // namespace

bool try_eval_shooting(const ModelConstants& mc, StructureId st, const VecX& y,
                       VecX& out, const FlowOptions& flow, ShootingIssue* issue) {
  const Layout& L = Layout::of(st);
  if (y.size() != L.dim()) {
    set_issue(issue, -1, 0.0, "unknown vector dimension mismatch");
    return false;
  }
  out.resize(L.dim());

  int row = 0;
  for (const auto& c : L.conds()) {
    out(row++) = cond_value(mc, c.kind, L.node(y, c.node));
  }
  const int endpoint_row = row;
  int match_row = endpoint_row + 4;

  FlowOptions fo = flow;
  fo.keep_dense = false;
  fo.with_stm = false;

  const auto& arcs = L.arcs();
  for (std::size_t j = 0; j < arcs.size(); ++j) {
    const auto& arc = arcs[j];
    const Vec6 s = arc_start_point(L, arc, y);
    const double ta = L.time(y, arc.t_begin_slot);
    const double tb = L.time(y, arc.t_end_slot);
    const auto res = expmap(mc, arc.field, PhasePoint::from_flat(s), ta, tb, fo);
    if (!res.ok) {
      set_issue(issue, static_cast<int>(j), res.t_reached, res.error);
      return false;
    }
    const Vec6 e = res.zT.flat();
    if (arc.end_node >= 0) {
      out.segment<6>(match_row) = e - L.node(y, arc.end_node);
      match_row += 6;
    } else {
      out(endpoint_row + 0) = e(1) - 1.0;
      out(endpoint_row + 1) = e(3);
      out(endpoint_row + 2) = e(5);
      out(endpoint_row + 3) = ham_value(mc, arc.field, e) - 1.0;
    }
  }
  return true;
}

VecX eval_shooting(const ModelConstants& mc, StructureId st, const VecX& y,
                   const FlowOptions& flow) {
  VecX out;
  ShootingIssue issue;
  if (!try_eval_shooting(mc, st, y, out, flow, &issue)) {
    std::ostringstream oss;
    oss << "eval_shooting(" << to_string(st) << "): arc " << issue.arc_index
        << " failed at t = " << issue.t_reached << ": " << issue.what;
    throw std::runtime_error(oss.str());
  }
  return out;
}

bool try_shooting_jacobian(const ModelConstants& mc, StructureId st, const VecX& y,
                           VecX& residual, MatX& jac, const FlowOptions& flow,
                           ShootingIssue* issue) {
  const Layout& L = Layout::of(st);
  if (y.size() != L.dim()) {
    set_issue(issue, -1, 0.0, "unknown vector dimension mismatch");
    return false;
  }
  residual.resize(L.dim());
  jac.setZero(L.dim(), L.dim());

  int row = 0;
  for (const auto& c : L.conds()) {
    const Vec6 z = L.node(y, c.node);
    residual(row) = cond_value(mc, c.kind, z);
    jac.block<1, 6>(row, L.node_offset(c.node)) =
        cond_gradient(mc, c.kind, z).transpose();
    ++row;
  }
  const int endpoint_row = row;
  int match_row = endpoint_row + 4;

  FlowOptions fo = flow;
  fo.keep_dense = false;

  const auto& arcs = L.arcs();
  for (std::size_t j = 0; j < arcs.size(); ++j) {
    const auto& arc = arcs[j];
    const Vec6 s = arc_start_point(L, arc, y);
    const double ta = L.time(y, arc.t_begin_slot);
    const double tb = L.time(y, arc.t_end_slot);
    const auto res =
        expmap_var(mc, arc.field, PhasePoint::from_flat(s), Vec6::Zero(), ta, tb, fo);
    if (!res.ok) {
      set_issue(issue, static_cast<int>(j), res.t_reached, res.error);
      return false;
    }
    const Vec6 e = res.zT.flat();
    Vec6 f_end;
    ham_rhs(mc, arc.field, e, f_end);

    // Sensitivity of the arc start point to its unknowns.
    // start columns: either p0 (3 wide) or a full node (6 wide).
    const bool from_p0 = arc.start_node < 0;
    const int start_col = from_p0 ? 0 : L.node_offset(arc.start_node);
    const int start_width = from_p0 ? 3 : 6;
    const Eigen::Matrix<double, 6, Eigen::Dynamic> dstart =
        from_p0 ? Eigen::Matrix<double, 6, Eigen::Dynamic>(res.stm.rightCols<3>())
                : Eigen::Matrix<double, 6, Eigen::Dynamic>(res.stm);

    Vec6 djump = Vec6::Zero();
    if (arc.jump_slot >= 0) {
      djump = -res.stm.col(3 + arc.jump_axis);  // d e / d nu
    }

    if (arc.end_node >= 0) {
      jac.block(match_row, start_col, 6, start_width) = dstart;
      if (arc.jump_slot >= 0) jac.block<6, 1>(match_row, arc.jump_slot) = djump;
      if (arc.t_begin_slot >= 0)
        jac.block<6, 1>(match_row, arc.t_begin_slot) -= f_end;
      jac.block<6, 1>(match_row, arc.t_end_slot) += f_end;
      jac.block<6, 6>(match_row, L.node_offset(arc.end_node)) -= Mat6::Identity();
      residual.segment<6>(match_row) = e - L.node(y, arc.end_node);
      match_row += 6;
    } else {
      Eigen::Matrix<double, 4, 6> D = Eigen::Matrix<double, 4, 6>::Zero();
      D(0, 1) = 1.0;
      D(1, 3) = 1.0;
      D(2, 5) = 1.0;
      D.row(3) = ham_gradient(mc, arc.field, e).transpose();

      jac.block(endpoint_row, start_col, 4, start_width) = D * dstart;
      if (arc.jump_slot >= 0)
        jac.block<4, 1>(endpoint_row, arc.jump_slot) = D * djump;
      if (arc.t_begin_slot >= 0)
        jac.block<4, 1>(endpoint_row, arc.t_begin_slot) -= D * f_end;
      jac.block<4, 1>(endpoint_row, arc.t_end_slot) += D * f_end;

      residual(endpoint_row + 0) = e(1) - 1.0;
      residual(endpoint_row + 1) = e(3);
      residual(endpoint_row + 2) = e(5);
      residual(endpoint_row + 3) = ham_value(mc, arc.field, e) - 1.0;
    }
  }
  return true;
}

MatX shooting_jacobian(const ModelConstants& mc, StructureId st, const VecX& y,
                       const FlowOptions& flow) {
  VecX r;
  MatX J;
  ShootingIssue issue;
  if (!try_shooting_jacobian(mc, st, y, r, J, flow, &issue)) {
    std::ostringstream oss;
    oss << "shooting_jacobian(" << to_string(st) << "): arc " << issue.arc_index
        << " failed at t = " << issue.t_reached << ": " << issue.what;
    throw std::runtime_error(oss.str());
  }
  return J;
}

AdmissibilityReport check_admissible(const ModelConstants& mc, StructureId st,
                                     const VecX& y, double tol_c,
                                     const FlowOptions& flow_opts) {
  const Layout& L = Layout::of(st);
  AdmissibilityReport rep;
  rep.admissible = true;

  auto violation = [&rep](const std::string& msg) {
    rep.violations.push_back(msg);
    rep.admissible = false;
  };

  // Time ordering over the arc boundaries, tf included.
  const auto& arcs = L.arcs();
  std::vector<double> boundary_times;
  boundary_times.push_back(L.time(y, arcs.front().t_begin_slot));
  for (const auto& arc : arcs) boundary_times.push_back(L.time(y, arc.t_end_slot));
  for (std::size_t i = 0; i + 1 < boundary_times.size(); ++i) {
    if (boundary_times[i + 1] - boundary_times[i] < -1e-9) {
      rep.time_ordering_ok = false;
      std::ostringstream oss;
      oss << "time ordering violated between boundaries " << i << " and " << i + 1
          << " (" << boundary_times[i] << " > " << boundary_times[i + 1] << ")";
      violation(oss.str());
    }
  }

  for (int slot : L.nu_slots()) {
    rep.jumps.push_back(y(slot));
    if (y(slot) > tol_c) {
      rep.jumps_ok = false;
      violation("jump " + L.names()[slot] + " is positive: " +
                std::to_string(y(slot)));
    }
  }

  FlowOptions fo = flow_opts;
  fo.keep_dense = true;
  fo.with_stm = false;

  const int n_samples = 400;
  for (std::size_t j = 0; j < arcs.size(); ++j) {
    const auto& arc = arcs[j];
    ArcDiagnostics d;
    d.label = arc.label;
    d.t_begin = L.time(y, arc.t_begin_slot);
    d.t_end = L.time(y, arc.t_end_slot);
    d.empty = (d.t_end - d.t_begin) < 1e-9;
    d.min_signed_phi = std::numeric_limits<double>::infinity();
    if (d.empty) {
      if (rep.structure_change_hint.empty()) {
        std::ostringstream oss;
        oss << "arc " << j << " (" << arc.label << ") has zero length";
        rep.structure_change_hint = oss.str();
      }
      rep.arcs.push_back(d);
      continue;
    }

    const Vec6 s = arc_start_point(L, arc, y);
    const auto res = expmap(mc, arc.field, PhasePoint::from_flat(s), d.t_begin,
                            d.t_end, fo);
    if (!res.ok) {
      violation(std::string("arc ") + std::to_string(j) +
                " integration failed during admissibility check");
      rep.arcs.push_back(d);
      continue;
    }

    const auto max_c1 = res.dense.max_of(
        [](double, const Vec6& z) { return z(0) - 1.0; }, d.t_begin, d.t_end);
    const auto max_c3 = res.dense.max_of(
        [](double, const Vec6& z) { return z(2) - 1.0; }, d.t_begin, d.t_end);
    d.max_c1 = max_c1.value;
    d.max_c3 = max_c3.value;
    if (d.max_c1 > tol_c) {
      rep.constraints_ok = false;
      violation("c1 > 0 on arc " + std::to_string(j) +
                " (max " + std::to_string(d.max_c1) + ")");
    }
    if (d.max_c3 > tol_c) {
      rep.constraints_ok = false;
      violation("c3 > 0 on arc " + std::to_string(j) +
                " (max " + std::to_string(d.max_c3) + ")");
    }

    const bool is_bang =
        arc.field == HId::HPlus || arc.field == HId::HMinus;
    if (is_bang) {
      const double s_b = (arc.field == HId::HPlus) ? 1.0 : -1.0;
      // Interior sign of the switching function; junction endpoints excluded.
      for (int k = 0; k <= n_samples; ++k) {
        const double frac = 0.02 + 0.96 * k / n_samples;
        const double t = d.t_begin + frac * (d.t_end - d.t_begin);
        const Vec6 z = res.dense.eval(t);
        d.min_signed_phi = std::min(d.min_signed_phi, s_b * mc.k7 * z(3));
      }
      if (d.min_signed_phi < -tol_c) {
        rep.bang_signs_ok = false;
        std::ostringstream oss;
        oss << "switching function has the wrong sign on bang arc " << j
            << " (worst " << d.min_signed_phi << ")";
        violation(oss.str());
      }
    } else {
      for (int k = 0; k <= n_samples; ++k) {
        const double t = d.t_begin + (d.t_end - d.t_begin) * k / n_samples;
        const Vec6 z = res.dense.eval(t);
        const PhasePoint pp = PhasePoint::from_flat(z);
        const double uc = control_value(mc, arc.field, pp.x);
        const double eta = eta_value(mc, arc.field, pp);
        d.max_abs_uc = std::max(d.max_abs_uc, std::abs(uc));
        d.max_eta = std::max(d.max_eta, eta);
      }
      if (d.max_abs_uc > 1.0 + tol_c) {
        rep.boundary_controls_ok = false;
        violation("boundary control exceeds the bang bound on arc " +
                  std::to_string(j) + " (max |u_c| " + std::to_string(d.max_abs_uc) +
                  ")");
      }
      if (d.max_eta > tol_c) {
        rep.multipliers_ok = false;
        violation("constraint multiplier is positive on arc " + std::to_string(j) +
                  " (max " + std::to_string(d.max_eta) + ")");
      }
    }
    rep.arcs.push_back(d);
  }
  return rep;
}

SolveReport solve(const ModelConstants& mc, StructureId st, const VecX& y_init,
                  const SolveOptions& opts) {
  SolveReport rep;
  rep.structure = st;
  rep.i_max = mc.i_max;
  rep.v_max = mc.v_max;
  rep.alpha_f = mc.alpha_f;

  const FlowOptions& fo = opts.flow;
  auto res_fn = [&](const VecX& y, VecX& out) {
    return try_eval_shooting(mc, st, y, out, fo, nullptr);
  };
  auto jac_fn = [&](const VecX& y, VecX& r, MatX& J) {
    return try_shooting_jacobian(mc, st, y, r, J, fo, nullptr);
  };
  const NewtonResult nr = newton_solve(res_fn, jac_fn, y_init, opts.newton);
  rep.converged = nr.converged;
  rep.residual_norm = nr.residual_norm;
  rep.iterations = nr.iterations;
  rep.y = nr.y;
  rep.message = nr.message;
  rep.residual_history = nr.residual_history;
  if (rep.converged) {
    rep.admissibility = check_admissible(mc, st, rep.y, opts.adm_tol, fo);
  }
  return rep;
}

SolveReport solve_s1_multistart(const ModelConstants& mc, const SolveOptions& opts) {
  const double p_grid[3] = {0.1, 1.0, 5.0};
  const double tf_grid[4] = {2.0, 5.0, 10.0, 20.0};

  SolveOptions probe = opts;
  probe.newton.max_iter = std::min(opts.newton.max_iter, 30);

  SolveReport best;
  best.structure = StructureId::S1;
  best.residual_norm = std::numeric_limits<double>::infinity();
  for (double tf : tf_grid) {
    for (double a : p_grid) {
      for (double b : p_grid) {
        for (double c : p_grid) {
          VecX y0(4);
          y0 << a, b, c, tf;
          SolveReport rep = solve(mc, StructureId::S1, y0, probe);
          if (rep.converged && rep.y(3) > 0.0) {
            // Polish with the full iteration budget.
            rep = solve(mc, StructureId::S1, rep.y, opts);
            if (rep.converged && rep.admissibility.admissible) return rep;
          }
          if (rep.residual_norm < best.residual_norm) best = rep;
        }
      }
    }
  }
  best.message = "multi-start grid exhausted without an admissible zero";
  best.converged = false;
  return best;
}

std::vector<TrajectoryRow> trajectory_rows(const ModelConstants& mc, StructureId st,
                                           const VecX& y, int samples_per_arc,
                                           const FlowOptions& flow_opts) {
  const Layout& L = Layout::of(st);
  FlowOptions fo = flow_opts;
  fo.keep_dense = true;
  fo.with_stm = false;

  std::vector<TrajectoryRow> rows;
  const auto& arcs = L.arcs();
  for (std::size_t j = 0; j < arcs.size(); ++j) {
    const auto& arc = arcs[j];
    const double ta = L.time(y, arc.t_begin_slot);
    const double tb = L.time(y, arc.t_end_slot);
    const Vec6 s = arc_start_point(L, arc, y);
    if (tb - ta < 1e-12) {
      const PhasePoint pp = PhasePoint::from_flat(s);
      rows.push_back({ta, s, control_value(mc, arc.field, pp.x),
                      eta_value(mc, arc.field, pp), arc.label});
      continue;
    }
    const auto res = expmap(mc, arc.field, PhasePoint::from_flat(s), ta, tb, fo);
    if (!res.ok) break;
    for (int k = 0; k <= samples_per_arc; ++k) {
      const double t = ta + (tb - ta) * k / samples_per_arc;
      const Vec6 z = res.dense.eval(t);
      const PhasePoint pp = PhasePoint::from_flat(z);
      rows.push_back({t, z, control_value(mc, arc.field, pp.x),
                      eta_value(mc, arc.field, pp), arc.label});
    }
  }
  return rows;
}

nlohmann::json solve_report_to_json(const SolveReport& rep) {
  const Layout& L = Layout::of(rep.structure);
  nlohmann::json j;
  j["structure"] = to_string(rep.structure);
  j["imax"] = rep.i_max;
  j["vmax"] = rep.v_max;
  j["alphaf"] = rep.alpha_f;
  j["converged"] = rep.converged;
  j["residual_norm"] = rep.residual_norm;
  j["iterations"] = rep.iterations;
  j["message"] = rep.message;
  j["y"] = std::vector<double>(rep.y.data(), rep.y.data() + rep.y.size());

  nlohmann::json slices;
  slices["p0"] = {rep.y(0), rep.y(1), rep.y(2)};
  slices["tf"] = rep.y(3);
  nlohmann::json times, jumps, nodes;
  for (int slot : L.time_slots()) times[L.names()[slot]] = rep.y(slot);
  for (int slot : L.nu_slots()) jumps[L.names()[slot]] = rep.y(slot);
  for (int i = 0; i < L.nodes(); ++i) {
    const Vec6 z = L.node(rep.y, i);
    nodes["z" + std::to_string(i + 1)] =
        std::vector<double>(z.data(), z.data() + 6);
  }
  slices["times"] = times;
  slices["jumps"] = jumps;
  slices["nodes"] = nodes;
  j["slices"] = slices;

  const auto& adm = rep.admissibility;
  j["admissible"] = adm.admissible;
  nlohmann::json ja;
  ja["time_ordering_ok"] = adm.time_ordering_ok;
  ja["constraints_ok"] = adm.constraints_ok;
  ja["bang_signs_ok"] = adm.bang_signs_ok;
  ja["boundary_controls_ok"] = adm.boundary_controls_ok;
  ja["multipliers_ok"] = adm.multipliers_ok;
  ja["jumps_ok"] = adm.jumps_ok;
  ja["violations"] = adm.violations;
  ja["structure_change_hint"] = adm.structure_change_hint;
  j["admissibility"] = ja;
  return j;
}

SolveReport solve_report_from_json(const nlohmann::json& j) {
  SolveReport rep;
  const auto st = structure_from_string(j.at("structure").get<std::string>());
  if (!st) throw std::invalid_argument("report: unknown structure id");
  rep.structure = *st;
  rep.i_max = j.at("imax").get<double>();
  rep.v_max = j.at("vmax").get<double>();
  rep.alpha_f = j.at("alphaf").get<double>();
  rep.converged = j.value("converged", false);
  rep.residual_norm = j.value("residual_norm", 0.0);
  rep.iterations = j.value("iterations", 0);
  rep.message = j.value("message", "");
  const auto yv = j.at("y").get<std::vector<double>>();
  const Layout& L = Layout::of(rep.structure);
  if (static_cast<int>(yv.size()) != L.dim()) {
    throw std::invalid_argument("report: unknown vector has the wrong dimension");
  }
  rep.y = Eigen::Map<const VecX>(yv.data(), yv.size());
  rep.admissibility.admissible = j.value("admissible", false);
  return rep;
}

}  // namespace evcar
