#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "evcar/scenario.hpp"
#include "test_support.hpp"

using namespace evcar;

namespace {

const ScenarioResult& full_scenario() {
  static const ScenarioResult result = run_scenario(CarParams::solar_car());
  return result;
}

}  // namespace

TEST_CASE("single-corner backward sweep keeps the switching function positive") {
  const GammaPlusReport rep =
      verify_gamma_plus(CarParams::solar_car(), Bounds{1200.0, 100.0, 120.0}, 1);
  CHECK(rep.tbar_f == doctest::Approx(5.6156).epsilon(1e-4));
  CHECK(rep.zero_crossings == 0);
  CHECK(rep.failed_integrations == 0);
  CHECK(rep.min_abs_phi > 0.0);
}

TEST_CASE("coarse-grid backward sweep has no switching zeros") {
  const GammaPlusReport rep =
      verify_gamma_plus(CarParams::solar_car(), Bounds{1200.0, 100.0, 120.0}, 10);
  CHECK(rep.zero_crossings == 0);
  CHECK(rep.failed_integrations == 0);
}

TEST_CASE("contact seed solves the boundary structure with a genuine jump") {
  const CarParams car = CarParams::solar_car();
  const ModelConstants mc1100 = normalize(car, Bounds{1100.0, 100.0, 110.0});
  VecX y1(4);
  y1 << 0.3675, 6.4479, 0.2417, 5.6156;
  const SolveReport s1 = solve(mc1100, StructureId::S1, y1);
  REQUIRE(s1.converged);

  const auto flow = expmap(mc1100, HamiltonianId::HPlus,
                           PhasePoint{Vec3::Zero(), Vec3(s1.y.segment<3>(0))}, 0.0,
                           s1.y(3));
  REQUIRE(flow.ok);
  const double imax_c1 =
      1100.0 *
      flow.dense.max_of([](double, const Vec6& z) { return z(0); }, 0.0, s1.y(3))
          .value;
  CHECK(imax_c1 == doctest::Approx(1081.94).epsilon(5e-4));

  // Rescale the zero to the contact bound and build the boundary seed there.
  VecX y1_c1 = s1.y;
  y1_c1(0) *= imax_c1 / 1100.0;
  const ModelConstants mc_c1 = normalize(car, Bounds{imax_c1, 100.0, 110.0});
  const VecX y2 = seed_s2_from_s1_contact(mc_c1, y1_c1);
  const SolveReport s2 = solve(mc_c1, StructureId::S2, y2);
  REQUIRE(s2.converged);
  CHECK(s2.y(6) < -1e-3);            // the exit jump is not zero
  CHECK(s2.y(5) - s2.y(4) <= 1e-3);  // boundary arc still collapsed
  CHECK(s2.admissibility.admissible);
}

TEST_CASE("full scenario reproduces the milestone bounds") {
  const ScenarioResult& res = full_scenario();
  CHECK(res.imax_leg.imax_c1 == doctest::Approx(1081.94).epsilon(5e-4));
  CHECK(res.vmax_leg.vmax_c3 == doctest::Approx(70.3716).epsilon(7e-4));
  CHECK(res.vmax_leg.vmax_gamma_c3 == doctest::Approx(65.6042).epsilon(8e-4));
  CHECK(res.vmax_leg.vmax_gamma_c3_oracle == doctest::Approx(65.6042).epsilon(1e-5));
  CHECK(res.vmax_leg.vmax_plus == doctest::Approx(64.1641).epsilon(2e-3));

  CHECK(res.imax_leg.sol_1100.y(3) == doctest::Approx(5.6156).epsilon(1e-4));
  CHECK(res.imax_leg.sol_1100.admissibility.admissible);
  CHECK(res.imax_leg.sol_150.admissibility.admissible);
  CHECK(res.vmax_leg.sol_v10.admissibility.admissible);
}

TEST_CASE("hand-offs agree pointwise in state") {
  const ScenarioResult& res = full_scenario();
  CHECK(res.imax_leg.handoff_h1_h2a.max_state_mismatch <= 1e-5);
  CHECK(res.imax_leg.handoff_h1_h2a.max_costate_mismatch_after <= 1e-5);
  // The costate differs before the contact time by the jump construction.
  CHECK(res.imax_leg.handoff_h1_h2a.max_costate_mismatch > 1e-2);

  CHECK(res.vmax_leg.handoff_h2b_h3.max_state_mismatch <= 1e-5);
  CHECK(res.vmax_leg.handoff_h3_h4.max_state_mismatch <= 1e-5);
  CHECK(res.vmax_leg.handoff_h4_h5.max_state_mismatch <= 1e-5);
  CHECK(res.vmax_leg.handoff_h4_h5.max_costate_mismatch <= 1e-5);
}

TEST_CASE("jumps stay nonpositive along every leg") {
  const ScenarioResult& res = full_scenario();
  auto check_leg = [](const LegResult& leg) {
    const Layout& L = Layout::of(leg.structure);
    for (const auto& p : leg.points) {
      for (int slot : L.nu_slots()) {
        CHECK(p.y(slot) <= 1e-6);
      }
    }
  };
  check_leg(res.imax_leg.h2a);
  check_leg(res.vmax_leg.h2b);
  check_leg(res.vmax_leg.h3);
  check_leg(res.vmax_leg.h4);
  check_leg(res.vmax_leg.h5);
}

TEST_CASE("slice structure labels match the bound ranges") {
  const ScenarioResult& res = full_scenario();
  const auto& rows = res.slice.rows;
  REQUIRE(!rows.empty());

  auto structure_near = [&rows](double lambda) {
    double best = 1e30;
    StructureId st = StructureId::S1;
    for (const auto& r : rows) {
      if (std::abs(r.lambda - lambda) < best) {
        best = std::abs(r.lambda - lambda);
        st = r.structure;
      }
    }
    return st;
  };
  CHECK(structure_near(105.0) == StructureId::S2);
  CHECK(structure_near(65.0) == StructureId::S4);
  CHECK(structure_near(30.0) == StructureId::S5);

  // tf grows as the bound shrinks; the boundary-arc length is flat along the
  // fixed-physical-trajectory legs.
  CHECK(res.slice.diagnostics.tf_monotonicity_violation <= 1e-6);
  CHECK(res.slice.diagnostics.h2b_arc_length_variation <= 1e-6);
  CHECK(res.slice.diagnostics.h3_arc_length_variation <= 1e-4);
}

TEST_CASE("boundary multiplier stays nonpositive along the solved gc1 arc") {
  const ScenarioResult& res = full_scenario();
  const SolveReport& rep = res.imax_leg.sol_150;
  CHECK(rep.y(6) < 0.0);  // genuine exit jump below the contact bound
  const ModelConstants mc =
      normalize(CarParams::solar_car(), Bounds{rep.i_max, rep.alpha_f, rep.v_max});
  const auto path = ExtremalPath::build(mc, rep.structure, rep.y);
  REQUIRE(path.has_value());
  const double t1 = rep.y(4), t2 = rep.y(5);
  for (int k = 0; k <= 200; ++k) {
    const double t = t1 + (t2 - t1) * k / 200.0;
    const Vec6 z = path->eval(t);
    const double eta_c1 = -mc.k5 * z(5);
    CHECK(eta_c1 <= 1e-6);
  }
}

TEST_CASE("final time is monotone against the current bound on h2a") {
  const ScenarioResult& res = full_scenario();
  const auto& pts = res.imax_leg.h2a.points;
  REQUIRE(pts.size() >= 2);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].lambda < pts[i - 1].lambda);
    CHECK(pts[i].y(3) >= pts[i - 1].y(3) - 1e-6);  // tf grows as imax shrinks
    if (pts[i - 1].tangent.size() == pts[i].tangent.size()) {
      CHECK(pts[i - 1].tangent.dot(pts[i].tangent) > 0.0);
    }
  }
}

TEST_CASE("path health along all legs") {
  const ScenarioResult& res = full_scenario();
  for (const LegResult* leg :
       {&res.imax_leg.h1, &res.imax_leg.h2a, &res.vmax_leg.h2b, &res.vmax_leg.h3,
        &res.vmax_leg.h4, &res.vmax_leg.h5}) {
    CHECK(leg->max_drift <= 1e-4);
    CHECK(leg->end_residual <= 1e-8);
    CHECK(!leg->points.empty());
  }
}

TEST_CASE("scenario outputs land on disk") {
  namespace fs = std::filesystem;
  const ScenarioResult& res = full_scenario();
  const std::string dir =
      (fs::temp_directory_path() / "evcar_scenario_test").string();
  fs::remove_all(dir);
  write_scenario_outputs(res, dir);

  for (const char* name :
       {"milestones.json", "slice.csv", "traj_s1_1100.csv", "traj_s2_150_110.csv",
        "traj_s5_vmax_stop.csv", "path_h1.csv", "path_h5.csv", "events.json"}) {
    CHECK(fs::exists(fs::path(dir) / name));
  }

  std::ifstream f(dir + "/milestones.json");
  nlohmann::json j;
  f >> j;
  CHECK(j.at("imax_c1").get<double>() == doctest::Approx(1081.94).epsilon(5e-4));
  CHECK(j.at("vmax_plus").get<double>() == doctest::Approx(64.1641).epsilon(2e-3));
  fs::remove_all(dir);
}

TEST_CASE("extremal path evaluator spans all arcs") {
  const ScenarioResult& res = full_scenario();
  const SolveReport& rep = res.vmax_leg.sol_s4;
  const ModelConstants mc =
      normalize(CarParams::solar_car(), Bounds{rep.i_max, rep.alpha_f, rep.v_max});
  const auto path = ExtremalPath::build(mc, rep.structure, rep.y);
  REQUIRE(path.has_value());
  CHECK(path->tf() == doctest::Approx(rep.y(3)));
  const Vec6 z0 = path->eval(0.0);
  CHECK(z0.head<3>().norm() <= 1e-9);
  const Vec6 zf = path->eval(path->tf());
  CHECK(zf(1) == doctest::Approx(1.0).epsilon(1e-7));
}
