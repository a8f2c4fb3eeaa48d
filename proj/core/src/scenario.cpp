#include "evcar/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace evcar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

[[noreturn]] void leg_abort(const std::string& stage, const SolveReport& rep) {
  std::ostringstream oss;
  oss << "scenario: " << stage << " failed (" << rep.message
      << ", residual " << rep.residual_norm << ", y = [";
  for (int i = 0; i < rep.y.size(); ++i) oss << (i ? ", " : "") << rep.y(i);
  oss << "])";
  throw std::runtime_error(oss.str());
}

Vec6 start_point_of(const Layout& L, const ArcSpec& arc, const VecX& y) {
  Vec6 s;
  if (arc.start_node < 0) {
    s.head<3>().setZero();
    s.tail<3>() = L.p0(y);
  } else {
    s = L.node(y, arc.start_node);
  }
  if (arc.jump_slot >= 0) s(3 + arc.jump_axis) -= y(arc.jump_slot);
  return s;
}

SolveOptions to_solve_options(const ScenarioOptions& o) {
  SolveOptions so;
  so.newton = o.newton;
  so.flow = o.flow;
  so.adm_tol = o.adm_tol;
  return so;
}

FollowOptions to_follow_options(const ScenarioOptions& o, double lambda_scale) {
  FollowOptions fo;
  fo.ds0 = 0.02;
  fo.ds_max = 0.2;
  fo.drift_ceiling = o.drift_ceiling;
  fo.event_lambda_tol = o.event_lambda_tol;
  fo.corrector = o.newton;
  fo.record_admissibility = o.record_admissibility;
  (void)lambda_scale;
  return fo;
}

LegResult to_leg_result(const std::string& name, StructureId st,
                        const FollowResult& fr) {
  LegResult leg;
  leg.name = name;
  leg.structure = st;
  leg.points = fr.points;
  leg.event = fr.event;
  leg.y_end = fr.y_end;
  leg.lambda_end = fr.lambda_end;
  leg.end_residual = fr.end_residual;
  leg.max_drift = fr.max_drift;
  return leg;
}

}  // namespace

std::optional<ExtremalPath> ExtremalPath::build(const ModelConstants& mc,
                                                StructureId st, const VecX& y,
                                                const FlowOptions& flow) {
  const Layout& L = Layout::of(st);
  ExtremalPath path;
  path.tf_ = L.tf(y);
  FlowOptions fo = flow;
  fo.keep_dense = true;
  fo.with_stm = false;
  for (const auto& arc : L.arcs()) {
    const double ta = L.time(y, arc.t_begin_slot);
    const double tb = L.time(y, arc.t_end_slot);
    if (tb - ta < 1e-12) continue;
    const Vec6 s = start_point_of(L, arc, y);
    auto res = expmap(mc, arc.field, PhasePoint::from_flat(s), ta, tb, fo);
    if (!res.ok) return std::nullopt;
    path.spans_.emplace_back(ta, tb);
    path.fields_.push_back(arc.field);
    path.dense_.push_back(std::move(res.dense));
  }
  if (path.spans_.empty()) return std::nullopt;
  return path;
}

Vec6 ExtremalPath::eval(double t) const {
  for (std::size_t i = 0; i + 1 < spans_.size(); ++i) {
    if (t < spans_[i].second) return dense_[i].eval(std::max(t, spans_[i].first));
  }
  const auto& last = spans_.back();
  return dense_.back().eval(std::clamp(t, last.first, last.second));
}

GammaPlusReport verify_gamma_plus(const CarParams& car, const Bounds& bounds,
                                  int grid_n, const FlowOptions& flow,
                                  int threads) {
  const auto t_start = Clock::now();
  const ModelConstants mc = normalize(car, bounds);

  SolveOptions so;
  so.flow = flow;
  const SolveReport s1 = solve_s1_multistart(mc, so);
  if (!s1.converged) leg_abort("gamma+ reference solve", s1);
  const double tbar = s1.y(3);

  GammaPlusReport rep;
  rep.grid_n = grid_n;
  rep.tbar_f = tbar;
  rep.min_abs_phi = std::numeric_limits<double>::infinity();

  const double delta = 1e-3 * tbar;  // excludes the structural endpoint zero
  const int n = std::max(grid_n, 1);
  std::vector<int> crossings(n, 0);
  std::vector<int> failures(n, 0);
  std::vector<double> min_phi(n, std::numeric_limits<double>::infinity());

  FlowOptions fo = flow;
  fo.keep_dense = true;
  fo.with_stm = false;

  auto run_row = [&](int i) {
    const double x1f = (n == 1) ? 0.0 : -1.0 + 2.0 * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double x3f = (n == 1) ? 0.0 : static_cast<double>(j) / (n - 1);
      PhasePoint zf;
      zf.x = Vec3(x1f, 1.0, x3f);
      zf.p = Vec3(0.0, 1.0, 0.0);
      const auto res = expmap(mc, HamiltonianId::HPlus, zf, tbar, 0.0, fo);
      if (!res.ok) {
        ++failures[i];
        continue;
      }
      // Backward time s = tbar - t; the zero at s = 0 is excluded.
      const int samples = 1200;
      const double t_hi = tbar - delta;
      double prev = 0.0;
      for (int k = 0; k <= samples; ++k) {
        const double t = t_hi * k / samples;
        const double phi = mc.k7 * res.dense.eval(t)(3);
        min_phi[i] = std::min(min_phi[i], std::abs(phi));
        if (k > 0 && prev * phi < 0.0) ++crossings[i];
        prev = phi;
      }
    }
  };

  int n_threads = threads > 0 ? threads
                              : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp(n_threads, 1, n);
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) run_row(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        int i;
        while ((i = next.fetch_add(1)) < n) run_row(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (int i = 0; i < n; ++i) {
    rep.zero_crossings += crossings[i];
    rep.failed_integrations += failures[i];
    rep.min_abs_phi = std::min(rep.min_abs_phi, min_phi[i]);
  }
  rep.runtime_seconds = seconds_since(t_start);
  return rep;
}

VecX seed_s2_from_s1_contact(const ModelConstants& mc, const VecX& y1,
                             const FlowOptions& flow) {
  const Layout& L1 = Layout::of(StructureId::S1);
  FlowOptions fo = flow;
  fo.keep_dense = true;
  fo.with_stm = false;

  PhasePoint z0;
  z0.p = L1.p0(y1);
  const double tf = L1.tf(y1);
  const auto res = expmap(mc, HamiltonianId::HPlus, z0, 0.0, tf, fo);
  if (!res.ok) throw std::runtime_error("seed s2: reference flow failed");

  const auto contact = res.dense.max_of(
      [](double, const Vec6& z) { return z(0); }, 0.0, tf);
  const double tau = contact.t;
  const Vec6 z_tau = res.dense.eval(tau);

  // Entry point has p1 = 0 by the switching condition; the exit jump absorbs
  // the original p1.
  Vec6 z1 = z_tau;
  z1(3) = 0.0;
  const double nu2 = -z_tau(3);

  fo.keep_dense = false;
  const auto back =
      expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(z1), tau, 0.0, fo);
  if (!back.ok) throw std::runtime_error("seed s2: backward flow failed");

  VecX y2(19);
  y2.segment<3>(0) = back.zT.p;
  y2(3) = tf;
  y2(4) = tau;
  y2(5) = tau;
  y2(6) = nu2;
  y2.segment<6>(7) = z1;
  y2.segment<6>(13) = z1;
  return y2;
}

VecX seed_s3_from_s2_contact(const ModelConstants& mc, const VecX& y2,
                             const FlowOptions& flow) {
  const Layout& L2 = Layout::of(StructureId::S2);
  const double tf = L2.tf(y2);
  const double t1 = y2(4), t2 = y2(5);
  FlowOptions fo = flow;
  fo.keep_dense = true;
  fo.with_stm = false;

  // Contact time with the velocity bound on the final bang arc, refined by a
  // scalar Newton on F0.c3 = 0 with exact flows.
  const auto& final_arc = L2.arcs().back();
  const Vec6 s_final = start_point_of(L2, final_arc, y2);
  const auto fin =
      expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(s_final), t2, tf, fo);
  if (!fin.ok) throw std::runtime_error("seed s3: final-arc flow failed");
  const auto contact =
      fin.dense.max_of([](double, const Vec6& z) { return z(2); }, t2, tf);
  double tau2 = contact.t;
  FlowOptions fx = flow;
  fx.keep_dense = false;
  Vec6 z_tau2 = fin.dense.eval(tau2);
  {
    const PhasePoint start = PhasePoint::from_flat(s_final);
    for (int it = 0; it < 8; ++it) {
      const auto r = expmap(mc, HamiltonianId::HPlus, start, t2, tau2, fx);
      if (!r.ok) break;
      z_tau2 = r.zT.flat();
      const double g = mc.k4 + mc.k5 * z_tau2(0) + mc.k6 * z_tau2(2) * z_tau2(2);
      Vec6 f;
      ham_rhs(mc, HamiltonianId::HPlus, z_tau2, f);
      const double dg = mc.k5 * f(0) + 2.0 * mc.k6 * z_tau2(2) * f(2);
      if (std::abs(dg) < 1e-14 || std::abs(g) < 1e-14) break;
      tau2 -= g / dg;
      tau2 = std::clamp(tau2, t2, tf);
    }
  }

  // Pre-jump point at the contact and the fold point before it: the two
  // conditions p1(tau1) = p3(tau1) = 0 on the backward flow fix (tau1, nu5).
  // The costate layer is linear along the fixed bang path, so the jump
  // response w(t) comes exactly from the difference of two backward flows.
  FlowOptions fd = flow;
  fd.keep_dense = true;
  const auto base_flow =
      expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(z_tau2), tau2, t2, fd);
  Vec6 z_bumped = z_tau2;
  z_bumped(5) += 1.0;
  const auto bump_flow =
      expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(z_bumped), tau2, t2, fd);
  if (!base_flow.ok || !bump_flow.ok)
    throw std::runtime_error("seed s3: backward fold flows failed");

  // Roots of p1(t) w3(t) - p3(t) w1(t): fold times compatible with some jump.
  auto fold_fn = [&](double t) {
    const Vec6 a = base_flow.dense.eval(t);
    const Vec6 b = bump_flow.dense.eval(t);
    return a(3) * (b(5) - a(5)) - a(5) * (b(3) - a(3));
  };
  auto fold_exact = [&](double t, Vec6* a_out, Vec6* w_out) {
    const auto ra =
        expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(z_tau2), tau2, t, fx);
    Vec6 zb = z_tau2;
    zb(5) += 1.0;
    const auto rb =
        expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(zb), tau2, t, fx);
    if (!ra.ok || !rb.ok) return std::numeric_limits<double>::quiet_NaN();
    const Vec6 a = ra.zT.flat();
    const Vec6 w = rb.zT.flat() - a;
    if (a_out) *a_out = a;
    if (w_out) *w_out = w;
    return a(3) * w(5) - a(5) * w(3);
  };

  double tau1 = tau2;
  double nu5 = 0.0;
  bool found = false;
  const int K = 2000;
  double prev_t = t2, prev_f = fold_fn(t2);
  for (int k = 1; k <= K; ++k) {
    const double t = t2 + (tau2 - t2) * k / K;
    const double f = fold_fn(t);
    if (prev_f * f <= 0.0 && std::abs(prev_f) + std::abs(f) > 0.0) {
      double lo = prev_t, hi = t, flo = prev_f;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = fold_fn(mid);
        if (flo * fm <= 0.0) {
          hi = mid;
        } else {
          lo = mid;
          flo = fm;
        }
      }
      const double t_root = 0.5 * (lo + hi);
      const Vec6 a = base_flow.dense.eval(t_root);
      const Vec6 b = bump_flow.dense.eval(t_root);
      const double w1 = b(3) - a(3);
      const double candidate = (std::abs(w1) > 1e-12) ? -a(3) / w1 : 0.0;
      // Keep the admissible-side fold closest to the contact.
      if (candidate <= 1e-9 && (!found || t_root > tau1)) {
        tau1 = t_root;
        nu5 = candidate;
        found = true;
      }
    }
    prev_t = t;
    prev_f = f;
  }
  if (!found)
    throw std::runtime_error("seed s3: no fold point on the final bang arc");

  // Polish the fold time on exact flows (secant), then read off the jump.
  Vec6 a_tau1 = Vec6::Zero(), w_tau1 = Vec6::Zero();
  {
    double ta = tau1 - 1e-5 * (tau2 - t2), tb = tau1;
    double fa = fold_exact(ta, nullptr, nullptr);
    double fb = fold_exact(tb, &a_tau1, &w_tau1);
    for (int it = 0; it < 12 && std::isfinite(fa) && std::isfinite(fb); ++it) {
      if (std::abs(fb - fa) < 1e-300) break;
      const double tn = tb - fb * (tb - ta) / (fb - fa);
      if (!std::isfinite(tn) || tn <= t2 || tn >= tau2) break;
      ta = tb;
      fa = fb;
      tb = tn;
      fb = fold_exact(tb, &a_tau1, &w_tau1);
      if (std::abs(fb) < 1e-15) break;
    }
    tau1 = tb;
  }
  if (std::abs(w_tau1(3)) > 1e-12) nu5 = -a_tau1(3) / w_tau1(3);

  Vec6 z5 = z_tau2;
  z5(5) += nu5;
  Vec6 z_tau1 = a_tau1;
  z_tau1.tail<3>() += nu5 * w_tau1.tail<3>();

  // Rebuild the upstream costates: exit jump at t2, boundary arc, first bang.
  FlowOptions fq = flow;
  fq.keep_dense = false;
  const auto to_t2 = expmap(mc, HamiltonianId::HPlus,
                            PhasePoint::from_flat(z_tau1), tau1, t2, fq);
  if (!to_t2.ok)
    throw std::runtime_error("seed s3: backward flow to t2 failed: " +
                             to_t2.error + " at t=" + std::to_string(to_t2.t_reached));
  const Vec6 w = to_t2.zT.flat();
  const double nu2 = -w(3);
  Vec6 z2 = w;
  z2(3) = 0.0;

  const auto to_t1 =
      expmap(mc, HamiltonianId::HC1, PhasePoint::from_flat(z2), t2, t1, fq);
  if (!to_t1.ok)
    throw std::runtime_error("seed s3: boundary backward flow failed: " +
                             to_t1.error + " at t=" + std::to_string(to_t1.t_reached) +
                             " span [" + std::to_string(t1) + ", " + std::to_string(t2) + "]");
  const Vec6 z1 = to_t1.zT.flat();

  const auto to_0 =
      expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(z1), t1, 0.0, fq);
  if (!to_0.ok) throw std::runtime_error("seed s3: initial backward flow failed");

  VecX y3(41);
  y3.segment<3>(0) = to_0.zT.p;
  y3(3) = tf;
  y3(4) = t1;
  y3(5) = t2;
  y3(6) = nu2;
  y3(7) = tau1;
  y3(8) = tau1;
  y3(9) = tau2;
  y3(10) = nu5;
  y3.segment<6>(11) = z1;
  y3.segment<6>(17) = z2;
  y3.segment<6>(23) = z_tau1;
  y3.segment<6>(29) = z_tau1;
  y3.segment<6>(35) = z5;
  return y3;
}

VecX seed_s4_from_s3_limit(const ModelConstants& mc, const VecX& y3) {
  (void)mc;
  VecX y4(34);
  y4.segment<4>(0) = y3.segment<4>(0);              // p0, tf
  y4(4) = y3(4);                                    // t1
  y4(5) = y3(5);                                    // t2
  y4(6) = y3(6);                                    // nu2
  y4(7) = y3(7);                                    // t3
  y4(8) = y3(8);                                    // t4: boundary entry
  const Vec6 z4 = y3.segment<6>(29);
  y4(9) = z4(5);                                    // nu4 absorbs p3(t4-)
  y4.segment<6>(10) = y3.segment<6>(11);            // z1
  y4.segment<6>(16) = y3.segment<6>(17);            // z2
  y4.segment<6>(22) = y3.segment<6>(23);            // z3
  y4.segment<6>(28) = z4;                           // z4
  return y4;
}

VecX seed_s5_from_s4_limit(const VecX& y4) {
  VecX y5(26);
  y5.segment<4>(0) = y4.segment<4>(0);              // p0, tf
  y5(4) = y4(4);                                    // t1
  y5(5) = 0.5 * (y4(5) + y4(7));                    // t2 = t3 at the limit
  y5(6) = y4(8);                                    // t3: boundary entry
  y5(7) = y4(9);                                    // nu3
  y5.segment<6>(8) = y4.segment<6>(10);             // z1
  y5.segment<6>(14) = y4.segment<6>(22);            // z2 <- start of g-
  y5.segment<6>(20) = y4.segment<6>(28);            // z3
  return y5;
}

HandoffCheck compare_extremals(const ModelConstants& mc, StructureId st_old,
                               const VecX& y_old, StructureId st_new,
                               const VecX& y_new, double junction_time,
                               const FlowOptions& flow, int samples) {
  HandoffCheck check;
  check.junction_time = junction_time;
  const auto a = ExtremalPath::build(mc, st_old, y_old, flow);
  const auto b = ExtremalPath::build(mc, st_new, y_new, flow);
  if (!a || !b) {
    check.max_state_mismatch = std::numeric_limits<double>::infinity();
    return check;
  }
  const double T = std::min(a->tf(), b->tf());
  check.max_state_mismatch = std::abs(a->tf() - b->tf());
  for (int k = 0; k <= samples; ++k) {
    const double t = T * k / samples;
    const Vec6 za = a->eval(t);
    const Vec6 zb = b->eval(t);
    const double dx = (za.head<3>() - zb.head<3>()).cwiseAbs().maxCoeff();
    const double dp = (za.tail<3>() - zb.tail<3>()).cwiseAbs().maxCoeff();
    check.max_state_mismatch = std::max(check.max_state_mismatch, dx);
    check.max_costate_mismatch = std::max(check.max_costate_mismatch, dp);
    if (t > junction_time + 1e-9) {
      check.max_costate_mismatch_after =
          std::max(check.max_costate_mismatch_after, dp);
    }
  }
  return check;
}

ImaxLegReport run_imax_leg(const CarParams& car, const ScenarioOptions& opts) {
  ImaxLegReport rep;
  const Bounds b0{1100.0, 100.0, 110.0};
  const ModelConstants mc0 = normalize(car, b0);
  const SolveOptions so = to_solve_options(opts);

  rep.sol_1100 = solve_s1_multistart(mc0, so);
  if (!rep.sol_1100.converged || !rep.sol_1100.admissibility.admissible) {
    leg_abort("S1 multi-start at (1100, 110)", rep.sol_1100);
  }

  // h1: follow the single-bang family down in i_max until the current
  // constraint becomes active.
  Homotopy h1 = make_shooting_homotopy(car, b0, StructureId::S1,
                                       HomotopyParam::IMax, "h1", opts.flow);
  h1.lambda_scale = 20.0;
  FollowOptions f1 = to_follow_options(opts, h1.lambda_scale);
  f1.monitors = {monitor_max_c1(car, b0, StructureId::S1, HomotopyParam::IMax,
                                opts.flow)};
  const FollowResult r1 = follow(h1, rep.sol_1100.y, 1100.0, f1);
  if (!r1.ok || !r1.event) {
    throw std::runtime_error("scenario: h1 did not reach the contact bound: " +
                             r1.message);
  }
  rep.h1 = to_leg_result("h1", StructureId::S1, r1);
  rep.imax_c1 = r1.event->lambda;

  // Hand off to the boundary-arc structure at the contact bound.
  const Bounds b_c1{rep.imax_c1, 100.0, 110.0};
  const ModelConstants mc_c1 = normalize(car, b_c1);
  const VecX y2_seed = seed_s2_from_s1_contact(mc_c1, r1.event->y, opts.flow);
  rep.sol_s2_limit = solve(mc_c1, StructureId::S2, y2_seed, so);
  if (!rep.sol_s2_limit.converged) leg_abort("S2 limit solve", rep.sol_s2_limit);
  rep.handoff_h1_h2a =
      compare_extremals(mc_c1, StructureId::S1, r1.event->y, StructureId::S2,
                        rep.sol_s2_limit.y, rep.sol_s2_limit.y(5), opts.flow);
  rep.handoff_h1_h2a.name = "h1->h2a";
  rep.handoff_h1_h2a.lambda = rep.imax_c1;

  // h2a: continue the boundary-arc family down to i_max = 150.
  Homotopy h2a = make_shooting_homotopy(car, b_c1, StructureId::S2,
                                        HomotopyParam::IMax, "h2a", opts.flow);
  h2a.lambda_scale = 1000.0;
  FollowOptions f2 = to_follow_options(opts, h2a.lambda_scale);
  f2.lambda_target = 150.0;
  const FollowResult r2 = follow(h2a, rep.sol_s2_limit.y, rep.imax_c1, f2);
  if (!r2.ok) throw std::runtime_error("scenario: h2a failed: " + r2.message);
  rep.h2a = to_leg_result("h2a", StructureId::S2, r2);

  const Bounds b150{150.0, 100.0, 110.0};
  rep.sol_150 = solve(normalize(car, b150), StructureId::S2, r2.y_end, so);
  if (!rep.sol_150.converged || !rep.sol_150.admissibility.admissible) {
    leg_abort("S2 solve at (150, 110)", rep.sol_150);
  }
  return rep;
}

namespace {

// Opens the collapsed negative bang of a limit S3 vector by +-a around the
// fold time, using the limit extremal's own flows.
VecX unfold_s3_seed(const ModelConstants& mc, const VecX& y3, double a,
                    const FlowOptions& flow) {
  VecX y = y3;
  const double tau1 = y3(7);
  const Vec6 z_tau1 = y3.segment<6>(23);
  FlowOptions fo = flow;
  fo.keep_dense = false;
  const auto back = expmap(mc, HamiltonianId::HPlus, PhasePoint::from_flat(z_tau1),
                           tau1, tau1 - a, fo);
  if (!back.ok) return y;
  const Vec6 z3 = back.zT.flat();
  const auto fwd = expmap(mc, HamiltonianId::HMinus, PhasePoint::from_flat(z3),
                          tau1 - a, tau1 + a, fo);
  if (!fwd.ok) return y;
  y(7) = tau1 - a;
  y(8) = tau1 + a;
  y.segment<6>(23) = z3;
  y.segment<6>(29) = fwd.zT.flat();
  return y;
}

}  // namespace

VmaxLegReport run_vmax_leg(const CarParams& car, const SolveReport& sol_150,
                           const ScenarioOptions& opts) {
  VmaxLegReport rep;
  const SolveOptions so = to_solve_options(opts);
  const Bounds base{150.0, 100.0, 110.0};

  // h2b: drop the velocity bound until the bound becomes active.
  Homotopy h2b = make_shooting_homotopy(car, base, StructureId::S2,
                                        HomotopyParam::VMax, "h2b", opts.flow);
  h2b.lambda_scale = 40.0;
  FollowOptions f2 = to_follow_options(opts, h2b.lambda_scale);
  f2.monitors = {monitor_max_c3(car, base, StructureId::S2, HomotopyParam::VMax,
                                opts.flow)};
  const FollowResult r2 = follow(h2b, sol_150.y, 110.0, f2);
  if (!r2.ok || !r2.event) {
    throw std::runtime_error("scenario: h2b did not reach the velocity contact: " +
                             r2.message);
  }
  rep.h2b = to_leg_result("h2b", StructureId::S2, r2);

  // The peak physical speed is invariant along the single-contact family, so
  // the localized event refines to the exact contact bound; re-correct there.
  VecX y2_star = r2.event->y;
  double v_star = r2.event->lambda;
  {
    Bounds b_ev = base;
    b_ev.v_max = v_star;
    const ModelConstants mc_ev = normalize(car, b_ev);
    const Layout& L2 = Layout::of(StructureId::S2);
    Vec6 s = L2.node(y2_star, 1);
    s(3) -= y2_star(6);
    FlowOptions fd = opts.flow;
    fd.keep_dense = true;
    const auto fin = expmap(mc_ev, HamiltonianId::HPlus, PhasePoint::from_flat(s),
                            y2_star(5), y2_star(3), fd);
    if (fin.ok) {
      const double x3_peak =
          fin.dense
              .max_of([](double, const Vec6& z) { return z(2); }, y2_star(5),
                      y2_star(3))
              .value;
      Bounds b_star = base;
      b_star.v_max = v_star * x3_peak;
      const SolveReport refined =
          solve(normalize(car, b_star), StructureId::S2, y2_star, so);
      if (refined.converged) {
        v_star *= x3_peak;
        y2_star = refined.y;
      }
    }
  }
  rep.vmax_c3 = v_star;

  // Hand off to S3 through the second-order contact. The collapsed vector is
  // constructed, not solved: the shooting system is singular at the fold.
  Bounds b_c3 = base;
  b_c3.v_max = rep.vmax_c3;
  const ModelConstants mc_c3 = normalize(car, b_c3);
  const VecX y3_limit = seed_s3_from_s2_contact(mc_c3, y2_star, opts.flow);
  {
    SolveOptions relaxed = so;
    relaxed.newton.tol = 1e-6;
    relaxed.newton.max_iter = 0;
    rep.sol_s3 = solve(mc_c3, StructureId::S3, y3_limit, relaxed);
  }
  if (!rep.sol_s3.converged) leg_abort("S3 limit construction", rep.sol_s3);
  rep.handoff_h2b_h3 =
      compare_extremals(mc_c3, StructureId::S2, y2_star, StructureId::S3,
                        rep.sol_s3.y, rep.sol_s3.y(9), opts.flow);
  rep.handoff_h2b_h3.name = "h2b->h3";
  rep.handoff_h2b_h3.lambda = rep.vmax_c3;

  // h3 starts just below the fold, where the system is regular again: open
  // the collapsed bang over a trial ladder and Newton-correct.
  Homotopy h3 = make_shooting_homotopy(car, base, StructureId::S3,
                                       HomotopyParam::VMax, "h3", opts.flow);
  h3.lambda_scale = 5.0;
  const double delta = 1e-2;
  SolveReport s3_start;
  s3_start.converged = false;
  {
    Bounds b_delta = base;
    b_delta.v_max = rep.vmax_c3 - delta;
    const ModelConstants mc_delta = normalize(car, b_delta);
    const double span = y3_limit(9) - y3_limit(7);  // tau2 - tau1
    for (double frac : {3e-2, 1e-2, 1e-1, 3e-3, 3e-1}) {
      const VecX y_try = unfold_s3_seed(mc_c3, y3_limit, frac * span, opts.flow);
      const SolveReport cand = solve(mc_delta, StructureId::S3, y_try, so);
      if (cand.converged && cand.y(8) - cand.y(7) > 1e-9) {
        s3_start = cand;
        break;
      }
    }
  }
  if (!s3_start.converged) leg_abort("S3 unfolded start", s3_start);

  FollowOptions f3 = to_follow_options(opts, h3.lambda_scale);
  f3.monitors = {monitor_uc3_admissible(car, base, HomotopyParam::VMax)};
  const FollowResult r3 = follow(h3, s3_start.y, rep.vmax_c3 - delta, f3);
  if (!r3.ok || !r3.event) {
    throw std::runtime_error("scenario: h3 did not reach u_c3 = 1: " + r3.message);
  }
  rep.h3 = to_leg_result("h3", StructureId::S3, r3);
  rep.vmax_gamma_c3_oracle = vmax_gamma_c3(car, base.i_max, base.alpha_f);
  rep.vmax_gamma_c3 = r3.event->lambda;

  // Hand off to S4 at the scalar-root threshold, where u_c3 = 1 exactly.
  Bounds b_gc3 = base;
  b_gc3.v_max = rep.vmax_gamma_c3_oracle;
  const ModelConstants mc_gc3 = normalize(car, b_gc3);
  const SolveReport s3_at_gc3 =
      solve(mc_gc3, StructureId::S3, r3.event->y, so);
  if (!s3_at_gc3.converged) leg_abort("S3 solve at u_c3 = 1", s3_at_gc3);
  const VecX y4_seed = seed_s4_from_s3_limit(mc_gc3, s3_at_gc3.y);
  rep.sol_s4 = solve(mc_gc3, StructureId::S4, y4_seed, so);
  if (!rep.sol_s4.converged) leg_abort("S4 limit solve", rep.sol_s4);
  rep.handoff_h3_h4 =
      compare_extremals(mc_gc3, StructureId::S3, s3_at_gc3.y, StructureId::S4,
                        rep.sol_s4.y, rep.sol_s4.y(8), opts.flow);
  rep.handoff_h3_h4.name = "h3->h4";
  rep.handoff_h3_h4.lambda = rep.vmax_gamma_c3_oracle;

  // h4: continue until the interior bang collapses (and the gc1 exit jump
  // vanishes with it).
  Homotopy h4 = make_shooting_homotopy(car, base, StructureId::S4,
                                       HomotopyParam::VMax, "h4", opts.flow);
  h4.lambda_scale = 2.0;
  FollowOptions f4 = to_follow_options(opts, h4.lambda_scale);
  f4.monitors = {monitor_arc_length(StructureId::S4, "t3", "t2"),
                 monitor_jump(StructureId::S4, "nu2")};
  const FollowResult r4 = follow(h4, rep.sol_s4.y, rep.vmax_gamma_c3_oracle, f4);
  if (!r4.ok || !r4.event) {
    throw std::runtime_error("scenario: h4 did not reach the collapse bound: " +
                             r4.message);
  }
  rep.h4 = to_leg_result("h4", StructureId::S4, r4);
  rep.vmax_plus = r4.event->lambda;

  // Hand off to S5; the limit extremals coincide exactly.
  Bounds b_plus = base;
  b_plus.v_max = rep.vmax_plus;
  const ModelConstants mc_plus = normalize(car, b_plus);
  const VecX y5_seed = seed_s5_from_s4_limit(r4.event->y);
  rep.sol_s5 = solve(mc_plus, StructureId::S5, y5_seed, so);
  if (!rep.sol_s5.converged) leg_abort("S5 limit solve", rep.sol_s5);
  rep.handoff_h4_h5 =
      compare_extremals(mc_plus, StructureId::S4, r4.event->y, StructureId::S5,
                        rep.sol_s5.y, 0.0, opts.flow);
  rep.handoff_h4_h5.name = "h4->h5";
  rep.handoff_h4_h5.lambda = rep.vmax_plus;

  // h5: down to the lowest bound of the sweep.
  Homotopy h5 = make_shooting_homotopy(car, base, StructureId::S5,
                                       HomotopyParam::VMax, "h5", opts.flow);
  h5.lambda_scale = 55.0;
  FollowOptions f5 = to_follow_options(opts, h5.lambda_scale);
  f5.lambda_target = opts.vmax_stop;
  const FollowResult r5 = follow(h5, rep.sol_s5.y, rep.vmax_plus, f5);
  if (!r5.ok) throw std::runtime_error("scenario: h5 failed: " + r5.message);
  rep.h5 = to_leg_result("h5", StructureId::S5, r5);

  Bounds b10 = base;
  b10.v_max = opts.vmax_stop;
  rep.sol_v10 = solve(normalize(car, b10), StructureId::S5, r5.y_end, so);
  if (!rep.sol_v10.converged) leg_abort("S5 solve at the sweep end", rep.sol_v10);
  return rep;
}

SliceReport slice_report(const VmaxLegReport& leg) {
  SliceReport rep;
  auto add_leg = [&rep](const LegResult& lr) {
    const Layout& L = Layout::of(lr.structure);
    for (const auto& p : lr.points) {
      SliceRow row;
      row.lambda = p.lambda;
      row.structure = lr.structure;
      row.tf = p.y(3);
      for (int slot : L.time_slots())
        row.times.emplace_back(L.names()[slot], p.y(slot));
      for (int slot : L.nu_slots())
        row.jumps.emplace_back(L.names()[slot], p.y(slot));
      row.admissible = p.admissible;
      rep.rows.push_back(std::move(row));
    }
  };
  add_leg(leg.h2b);
  add_leg(leg.h3);
  add_leg(leg.h4);
  add_leg(leg.h5);

  // tf grows as the velocity bound shrinks.
  std::vector<std::pair<double, double>> lambda_tf;
  for (const auto& r : rep.rows) lambda_tf.emplace_back(r.lambda, r.tf);
  std::sort(lambda_tf.begin(), lambda_tf.end(),
            [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i + 1 < lambda_tf.size(); ++i) {
    rep.diagnostics.tf_monotonicity_violation =
        std::max(rep.diagnostics.tf_monotonicity_violation,
                 lambda_tf[i].second - lambda_tf[i + 1].second);
  }

  auto arc_variation = [](const LegResult& lr) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : lr.points) {
      const double len = p.y(5) - p.y(4);  // t2 - t1 in S2 and S3 layouts
      lo = std::min(lo, len);
      hi = std::max(hi, len);
    }
    return lr.points.empty() ? 0.0 : hi - lo;
  };
  rep.diagnostics.h2b_arc_length_variation = arc_variation(leg.h2b);
  rep.diagnostics.h3_arc_length_variation = arc_variation(leg.h3);
  return rep;
}

ScenarioResult run_scenario(const CarParams& car, const ScenarioOptions& opts) {
  const auto t0 = Clock::now();
  ScenarioResult res;
  res.car = car;
  res.imax_leg = run_imax_leg(car, opts);
  res.vmax_leg = run_vmax_leg(car, res.imax_leg.sol_150, opts);
  res.slice = slice_report(res.vmax_leg);
  res.runtime_seconds = seconds_since(t0);
  return res;
}

void write_slice_csv(std::ostream& os, const SliceReport& report) {
  os << "lambda,structure,tf,t1,t2,t3,t4,t5,nu2,nu3,nu4,nu5,admissible\n";
  os.precision(15);
  for (const auto& r : report.rows) {
    auto find = [](const std::vector<std::pair<std::string, double>>& v,
                   const char* key) -> std::string {
      for (const auto& [name, value] : v) {
        if (name == key) return std::to_string(value);
      }
      return "";
    };
    os << r.lambda << ',' << to_string(r.structure) << ',' << r.tf;
    for (const char* key : {"t1", "t2", "t3", "t4", "t5"}) os << ',' << find(r.times, key);
    for (const char* key : {"nu2", "nu3", "nu4", "nu5"}) os << ',' << find(r.jumps, key);
    os << ',' << (r.admissible ? 1 : 0) << '\n';
  }
}

nlohmann::json milestones_to_json(const ScenarioResult& res) {
  nlohmann::json j;
  j["imax_c1"] = res.imax_leg.imax_c1;
  j["vmax_c3"] = res.vmax_leg.vmax_c3;
  j["vmax_gamma_c3"] = res.vmax_leg.vmax_gamma_c3;
  j["vmax_gamma_c3_oracle"] = res.vmax_leg.vmax_gamma_c3_oracle;
  j["vmax_plus"] = res.vmax_leg.vmax_plus;
  j["sol_1100"] = {{"tf", res.imax_leg.sol_1100.y(3)},
                   {"p0",
                    {res.imax_leg.sol_1100.y(0), res.imax_leg.sol_1100.y(1),
                     res.imax_leg.sol_1100.y(2)}},
                   {"residual", res.imax_leg.sol_1100.residual_norm}};
  j["runtime_seconds"] = res.runtime_seconds;
  return j;
}

void write_scenario_outputs(const ScenarioResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream f(dir + "/milestones.json");
    f << milestones_to_json(res).dump(2) << '\n';
  }
  {
    std::ofstream f(dir + "/slice.csv");
    write_slice_csv(f, res.slice);
  }

  const CarParams& car = res.car;
  auto dump_traj = [&](const SolveReport& rep, const std::string& name) {
    const ModelConstants mc =
        normalize(car, Bounds{rep.i_max, rep.alpha_f, rep.v_max});
    const auto rows = trajectory_rows(mc, rep.structure, rep.y);
    std::ofstream f(dir + "/" + name);
    write_trajectory_csv(f, rows);
  };
  dump_traj(res.imax_leg.sol_1100, "traj_s1_1100.csv");
  dump_traj(res.imax_leg.sol_s2_limit, "traj_s2_imax_c1.csv");
  dump_traj(res.imax_leg.sol_150, "traj_s2_150_110.csv");
  dump_traj(res.vmax_leg.sol_s3, "traj_s3_vmax_c3.csv");
  dump_traj(res.vmax_leg.sol_s4, "traj_s4_vmax_gamma_c3.csv");
  dump_traj(res.vmax_leg.sol_s5, "traj_s5_vmax_plus.csv");
  dump_traj(res.vmax_leg.sol_v10, "traj_s5_vmax_stop.csv");

  std::vector<Event> events;
  auto dump_leg = [&](const LegResult& leg, StructureId st) {
    Homotopy names_only;
    names_only.dim = Layout::of(st).dim();
    names_only.component_names = Layout::of(st).names();
    std::ofstream f(dir + "/path_" + leg.name + ".csv");
    write_path_csv(f, names_only, leg.points);
    if (leg.event) events.push_back(*leg.event);
  };
  dump_leg(res.imax_leg.h1, StructureId::S1);
  dump_leg(res.imax_leg.h2a, StructureId::S2);
  dump_leg(res.vmax_leg.h2b, StructureId::S2);
  dump_leg(res.vmax_leg.h3, StructureId::S3);
  dump_leg(res.vmax_leg.h4, StructureId::S4);
  dump_leg(res.vmax_leg.h5, StructureId::S5);
  {
    std::ofstream f(dir + "/events.json");
    f << events_to_json(events).dump(2) << '\n';
  }
}

}  // namespace evcar
