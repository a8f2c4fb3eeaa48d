// Command line front end: single solves, homotopy legs, the full bound sweep
// and the bang-optimality verification, with JSON/CSV outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "evcar/continuation.hpp"
#include "evcar/model.hpp"
#include "evcar/scenario.hpp"
#include "evcar/shooting.hpp"

namespace {

using namespace evcar;

struct CommonConfig {
  std::string config_path;
  double imax = 0.0;
  double vmax = 0.0;
  double alphaf = 0.0;
};

struct Tolerances {
  FlowOptions flow;
  NewtonOptions newton;
};

Tolerances tolerances_from_env() {
  Tolerances t;
  if (const char* env = std::getenv("EVCAR_TOL")) {
    const double tol = std::atof(env);
    if (tol > 0.0) {
      t.flow.abs_tol = t.flow.rel_tol = tol;
      t.newton.tol = std::max(1e-8, tol);
    }
  }
  return t;
}

CarParams load_car(const CommonConfig& cfg) {
  if (cfg.config_path.empty()) return CarParams::solar_car();
  std::ifstream f(cfg.config_path);
  if (!f) throw std::invalid_argument("config: cannot open '" + cfg.config_path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  return car_params_from_json(j);
}

std::optional<Bounds> bounds_from_config_file(const CommonConfig& cfg) {
  if (cfg.config_path.empty()) return std::nullopt;
  std::ifstream f(cfg.config_path);
  nlohmann::json j;
  f >> j;
  if (j.contains("imax") && j.contains("vmax") && j.contains("alphaf")) {
    return bounds_from_json(j);
  }
  return std::nullopt;
}

Bounds resolve_bounds(const CommonConfig& cfg, const Bounds& fallback) {
  Bounds b = fallback;
  if (auto file_bounds = bounds_from_config_file(cfg)) b = *file_bounds;
  if (cfg.imax > 0.0) b.i_max = cfg.imax;
  if (cfg.vmax > 0.0) b.v_max = cfg.vmax;
  if (cfg.alphaf > 0.0) b.alpha_f = cfg.alphaf;
  return b;
}

SolveReport load_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("report: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("report: invalid JSON: ") + e.what());
  }
  return solve_report_from_json(j);
}

void write_report(const SolveReport& rep, const std::string& path) {
  std::ofstream f(path);
  f << solve_report_to_json(rep).dump(2) << '\n';
}

int cmd_solve(const CommonConfig& cfg, const std::string& structure,
              const std::string& init_path, const std::string& out_path,
              const std::string& traj_path) {
  const auto st = structure_from_string(structure);
  if (!st) throw std::invalid_argument("solve: unknown structure '" + structure + "'");

  const CarParams car = load_car(cfg);
  const Tolerances tols = tolerances_from_env();
  SolveOptions opts;
  opts.flow = tols.flow;
  opts.newton = tols.newton;

  Bounds bounds{1100.0, 100.0, 110.0};
  VecX y_init;
  if (!init_path.empty()) {
    const SolveReport from = load_report(init_path);
    if (from.structure != *st) {
      throw std::invalid_argument("solve: report structure does not match --structure");
    }
    bounds = Bounds{from.i_max, from.alpha_f, from.v_max};
    y_init = from.y;
  } else if (*st != StructureId::S1) {
    throw std::invalid_argument(
        "solve: structures beyond s1 need --init (a report to start from)");
  }
  bounds = resolve_bounds(cfg, bounds);
  const ModelConstants mc = normalize(car, bounds);

  const SolveReport rep = (y_init.size() == 0)
                              ? solve_s1_multistart(mc, opts)
                              : solve(mc, *st, y_init, opts);
  if (!out_path.empty()) write_report(rep, out_path);
  if (!traj_path.empty() && rep.converged) {
    std::ofstream f(traj_path);
    write_trajectory_csv(f, trajectory_rows(mc, *st, rep.y, 200, opts.flow));
  }
  std::cout << "structure " << to_string(*st) << ": "
            << (rep.converged ? "converged" : "failed") << ", residual "
            << rep.residual_norm << ", iterations " << rep.iterations
            << ", admissible " << (rep.admissibility.admissible ? "yes" : "no")
            << "\n";
  if (rep.converged) {
    std::cout << "tf = " << rep.y(3) << ", p0 = (" << rep.y(0) << ", " << rep.y(1)
              << ", " << rep.y(2) << ")\n";
  }
  return rep.converged ? 0 : 1;
}

struct HomotopySpec {
  StructureId structure;
  HomotopyParam param;
};

std::optional<HomotopySpec> homotopy_spec(const std::string& name) {
  if (name == "h1") return HomotopySpec{StructureId::S1, HomotopyParam::IMax};
  if (name == "h2a") return HomotopySpec{StructureId::S2, HomotopyParam::IMax};
  if (name == "h2b") return HomotopySpec{StructureId::S2, HomotopyParam::VMax};
  if (name == "h3") return HomotopySpec{StructureId::S3, HomotopyParam::VMax};
  if (name == "h4") return HomotopySpec{StructureId::S4, HomotopyParam::VMax};
  if (name == "h5") return HomotopySpec{StructureId::S5, HomotopyParam::VMax};
  return std::nullopt;
}

std::vector<Monitor> auto_monitors(const CarParams& car, const Bounds& base,
                                   const HomotopySpec& spec,
                                   const FlowOptions& flow) {
  // Structure-change monitors; constraints already pinned to zero by the
  // layout are excluded, they sit on the boundary by construction.
  std::vector<Monitor> m;
  switch (spec.structure) {
    case StructureId::S1:
      m.push_back(monitor_max_c1(car, base, spec.structure, spec.param, flow));
      m.push_back(monitor_max_c3(car, base, spec.structure, spec.param, flow));
      break;
    case StructureId::S2:
      m.push_back(monitor_max_c3(car, base, spec.structure, spec.param, flow));
      m.push_back(monitor_arc_length(spec.structure, "t2", "t1"));
      m.push_back(monitor_jump(spec.structure, "nu2"));
      break;
    case StructureId::S3:
      m.push_back(monitor_uc3_admissible(car, base, spec.param));
      m.push_back(monitor_arc_length(spec.structure, "t4", "t3"));
      m.push_back(monitor_arc_length(spec.structure, "t2", "t1"));
      break;
    case StructureId::S4:
      m.push_back(monitor_arc_length(spec.structure, "t3", "t2"));
      m.push_back(monitor_jump(spec.structure, "nu2"));
      break;
    case StructureId::S5:
      m.push_back(monitor_arc_length(spec.structure, "t3", "t2"));
      m.push_back(monitor_arc_length(spec.structure, "t2", "t1"));
      m.push_back(monitor_jump(spec.structure, "nu3"));
      break;
  }
  return m;
}

int cmd_continue(const CommonConfig& cfg, const std::string& homotopy_name,
                 const std::string& from_path, double target_imax,
                 double target_vmax, bool auto_stop, bool per_step_correction,
                 const std::string& out_path, const std::string& events_path,
                 const std::string& end_report_path) {
  const auto spec = homotopy_spec(homotopy_name);
  if (!spec) throw std::invalid_argument("continue: unknown homotopy '" + homotopy_name + "'");

  const SolveReport from = load_report(from_path);
  if (from.structure != spec->structure) {
    throw std::invalid_argument("continue: report structure " +
                                std::string(to_string(from.structure)) +
                                " does not match homotopy " + homotopy_name);
  }
  if (!from.converged) {
    throw std::invalid_argument("continue: starting report did not converge");
  }

  const CarParams car = load_car(cfg);
  const Tolerances tols = tolerances_from_env();
  const Bounds base = resolve_bounds(cfg, Bounds{from.i_max, from.alpha_f, from.v_max});
  const double lambda0 =
      (spec->param == HomotopyParam::IMax) ? from.i_max : from.v_max;

  Homotopy h = make_shooting_homotopy(car, base, spec->structure, spec->param,
                                      homotopy_name, tols.flow);
  h.lambda_scale = std::max(1.0, 0.05 * lambda0);

  FollowOptions opts;
  opts.ds0 = 0.02;
  opts.ds_max = 0.2;
  opts.corrector = tols.newton;
  opts.per_step_correction = per_step_correction;
  if (target_imax > 0.0) {
    opts.lambda_target = target_imax;
    opts.direction = target_imax < from.i_max ? -1 : +1;
  } else if (target_vmax > 0.0) {
    opts.lambda_target = target_vmax;
    opts.direction = target_vmax < from.v_max ? -1 : +1;
  } else if (auto_stop) {
    opts.monitors = auto_monitors(car, base, *spec, tols.flow);
    opts.direction = -1;
  } else {
    throw std::invalid_argument(
        "continue: pass --target-imax, --target-vmax or --auto");
  }

  const FollowResult res = follow(h, from.y, lambda0, opts);

  if (!out_path.empty()) {
    std::ofstream f(out_path);
    write_path_csv(f, h, res.points);
  }
  std::vector<Event> events;
  if (res.event) events.push_back(*res.event);
  if (!events_path.empty()) {
    std::ofstream f(events_path);
    f << events_to_json(events).dump(2) << '\n';
  }

  if (!res.ok) {
    std::cerr << "continue: " << res.message << "\n";
    return 1;
  }
  if (!end_report_path.empty()) {
    Bounds end_bounds = base;
    if (spec->param == HomotopyParam::IMax)
      end_bounds.i_max = res.lambda_end;
    else
      end_bounds.v_max = res.lambda_end;
    const ModelConstants mc_end = normalize(car, end_bounds);
    SolveOptions so;
    so.flow = tols.flow;
    so.newton = tols.newton;
    const SolveReport end_rep = solve(mc_end, spec->structure, res.y_end, so);
    write_report(end_rep, end_report_path);
  }
  std::cout << homotopy_name << ": " << res.points.size() << " path points, "
            << "lambda " << lambda0 << " -> " << res.lambda_end
            << ", max drift " << res.max_drift << ", end residual "
            << res.end_residual << "\n";
  if (res.event) {
    std::cout << "event: " << res.event->kind << " at lambda = " << res.event->lambda
              << "\n";
  }
  return 0;
}

int cmd_scenario(const CommonConfig& cfg, const std::string& out_dir) {
  const CarParams car = load_car(cfg);
  const Tolerances tols = tolerances_from_env();
  ScenarioOptions opts;
  opts.flow = tols.flow;
  opts.newton = tols.newton;

  const ScenarioResult res = run_scenario(car, opts);
  write_scenario_outputs(res, out_dir);
  std::cout << "imax_c1        = " << res.imax_leg.imax_c1 << "\n"
            << "vmax_c3        = " << res.vmax_leg.vmax_c3 << "\n"
            << "vmax_gamma_c3  = " << res.vmax_leg.vmax_gamma_c3
            << " (oracle " << res.vmax_leg.vmax_gamma_c3_oracle << ")\n"
            << "vmax_plus      = " << res.vmax_leg.vmax_plus << "\n"
            << "runtime        = " << res.runtime_seconds << " s\n"
            << "outputs in " << out_dir << "\n";
  return 0;
}

int cmd_verify(const CommonConfig& cfg, int grid, int threads,
               const std::string& out_path) {
  const CarParams car = load_car(cfg);
  const Tolerances tols = tolerances_from_env();
  Bounds bounds{1200.0, 100.0, 120.0};
  bounds = resolve_bounds(cfg, bounds);

  const GammaPlusReport rep = verify_gamma_plus(car, bounds, grid, tols.flow, threads);
  std::cout << "grid " << rep.grid_n << "x" << rep.grid_n << ", tbar_f = "
            << rep.tbar_f << "\n"
            << "zero crossings = " << rep.zero_crossings << ", min |Phi| = "
            << rep.min_abs_phi << ", failed integrations = "
            << rep.failed_integrations << "\n"
            << "runtime = " << rep.runtime_seconds << " s\n";
  if (!out_path.empty()) {
    nlohmann::json j{{"grid", rep.grid_n},
                     {"tbar_f", rep.tbar_f},
                     {"zero_crossings", rep.zero_crossings},
                     {"min_abs_phi", rep.min_abs_phi},
                     {"failed_integrations", rep.failed_integrations},
                     {"runtime_seconds", rep.runtime_seconds}};
    std::ofstream f(out_path);
    f << j.dump(2) << '\n';
  }
  return (rep.zero_crossings == 0 && rep.failed_integrations == 0) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-time electric car extremals: shooting and homotopy tools"};
  app.require_subcommand(1);

  CommonConfig cfg;

  auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--config", cfg.config_path, "Car parameter JSON file");
    sub->add_option("--imax", cfg.imax, "Maximal current (A)");
    sub->add_option("--vmax", cfg.vmax, "Maximal velocity (km/h)");
    sub->add_option("--alphaf", cfg.alphaf, "Target position (m)");
  };

  // solve
  std::string structure = "s1", init_path, out_path = "report.json", traj_path;
  CLI::App* solve_cmd = app.add_subcommand("solve", "Solve one shooting system");
  add_common(solve_cmd);
  solve_cmd->add_option("--structure", structure, "Structure id (s1..s5)");
  solve_cmd->add_option("--init", init_path, "Report JSON to start from");
  solve_cmd->add_option("--out", out_path, "Report JSON output");
  solve_cmd->add_option("--traj", traj_path, "Trajectory CSV output");

  // continue
  std::string homotopy_name, from_path, path_out = "path.csv",
              events_out = "events.json", end_report_out;
  double target_imax = 0.0, target_vmax = 0.0;
  bool auto_stop = false, per_step = false;
  CLI::App* cont_cmd =
      app.add_subcommand("continue", "Follow a homotopy leg from a solved report");
  add_common(cont_cmd);
  cont_cmd->add_option("--homotopy", homotopy_name,
                       "Leg name: h1, h2a, h2b, h3, h4, h5")
      ->required();
  cont_cmd->add_option("--from", from_path, "Starting report JSON")->required();
  cont_cmd->add_option("--target-imax", target_imax, "Stop at this current bound");
  cont_cmd->add_option("--target-vmax", target_vmax, "Stop at this velocity bound");
  cont_cmd->add_flag("--auto", auto_stop, "Stop at the first structure-change event");
  cont_cmd->add_flag("--per-step-correction", per_step,
                     "Newton-correct after every accepted step");
  cont_cmd->add_option("--out", path_out, "Path CSV output");
  cont_cmd->add_option("--events", events_out, "Events JSON output");
  cont_cmd->add_option("--end-report", end_report_out,
                       "Report JSON of the corrected endpoint");

  // scenario
  std::string scen_kind = "imax150", scen_out = "results";
  CLI::App* scen_cmd = app.add_subcommand(
      "scenario",
      "Run the full bound sweep: legs h1, h2a (current bound down to 150 A), "
      "then h2b, h3, h4, h5 (velocity bound down to 10 km/h)");
  add_common(scen_cmd);
  scen_cmd->add_option("kind", scen_kind, "Scenario name (imax150)");
  scen_cmd->add_option("--out", scen_out, "Output directory");

  // verify
  std::string verify_kind = "bang-optimality", verify_out;
  int grid = 50, threads = 0;
  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "Backward sweep of the switching function over the target set");
  add_common(verify_cmd);
  verify_cmd->add_option("kind", verify_kind, "Check name (bang-optimality)");
  verify_cmd->add_option("--grid", grid, "Grid resolution per axis");
  verify_cmd->add_option("--threads", threads, "Worker threads (0 = hardware)");
  verify_cmd->add_option("--out", verify_out, "Report JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (solve_cmd->parsed()) {
      return cmd_solve(cfg, structure, init_path, out_path, traj_path);
    }
    if (cont_cmd->parsed()) {
      return cmd_continue(cfg, homotopy_name, from_path, target_imax, target_vmax,
                          auto_stop, per_step, path_out, events_out,
                          end_report_out);
    }
    if (scen_cmd->parsed()) {
      if (scen_kind != "imax150") {
        throw std::invalid_argument("scenario: unknown kind '" + scen_kind + "'");
      }
      return cmd_scenario(cfg, scen_out);
    }
    if (verify_cmd->parsed()) {
      if (verify_kind != "bang-optimality") {
        throw std::invalid_argument("verify: unknown kind '" + verify_kind + "'");
      }
      return cmd_verify(cfg, grid, threads, verify_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
