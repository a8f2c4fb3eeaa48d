#include <benchmark/benchmark.h>

#include "evcar/continuation.hpp"
#include "evcar/flow.hpp"
#include "evcar/shooting.hpp"

namespace {

using namespace evcar;

ModelConstants table3(double i_max, double v_max) {
  return normalize(CarParams::solar_car(), Bounds{i_max, 100.0, v_max});
}

PhasePoint reference_start() {
  PhasePoint z0;
  z0.p = Vec3(0.3675, 6.4479, 0.2417);
  return z0;
}

VecX s2_vector(const ModelConstants& mc) {
  VecX y(19);
  y.segment<3>(0) = Vec3(0.36, 6.45, 0.24);
  y(3) = 5.65;
  y(4) = 1.6;
  y(5) = 1.9;
  y(6) = -0.02;
  const auto a1 = expmap(mc, HamiltonianId::HPlus,
                         PhasePoint{Vec3::Zero(), Vec3(y.segment<3>(0))}, 0.0, y(4));
  y.segment<6>(7) = a1.zT.flat();
  const auto a2 = expmap(mc, HamiltonianId::HC1, a1.zT, y(4), y(5));
  y.segment<6>(13) = a2.zT.flat();
  return y;
}

void BM_expmap(benchmark::State& state) {
  const ModelConstants mc = table3(1100.0, 110.0);
  const PhasePoint z0 = reference_start();
  FlowOptions fo;
  fo.keep_dense = false;
  for (auto _ : state) {
    auto res = expmap(mc, HamiltonianId::HPlus, z0, 0.0, 5.6156, fo);
    benchmark::DoNotOptimize(res.zT);
  }
}
BENCHMARK(BM_expmap);

void BM_expmap_var(benchmark::State& state) {
  const ModelConstants mc = table3(1100.0, 110.0);
  const PhasePoint z0 = reference_start();
  FlowOptions fo;
  fo.keep_dense = false;
  for (auto _ : state) {
    auto res = expmap_var(mc, HamiltonianId::HPlus, z0, Vec6::Zero(), 0.0, 5.6156, fo);
    benchmark::DoNotOptimize(res.stm);
  }
}
BENCHMARK(BM_expmap_var);

void BM_eval_shooting_s2(benchmark::State& state) {
  const ModelConstants mc = table3(1081.0, 110.0);
  const VecX y = s2_vector(mc);
  FlowOptions fo;
  fo.keep_dense = false;
  VecX out;
  for (auto _ : state) {
    try_eval_shooting(mc, StructureId::S2, y, out, fo);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_eval_shooting_s2);

void BM_shooting_jacobian_s2(benchmark::State& state) {
  const ModelConstants mc = table3(1081.0, 110.0);
  const VecX y = s2_vector(mc);
  FlowOptions fo;
  fo.keep_dense = false;
  VecX r;
  MatX J;
  for (auto _ : state) {
    try_shooting_jacobian(mc, StructureId::S2, y, r, J, fo);
    benchmark::DoNotOptimize(J);
  }
}
BENCHMARK(BM_shooting_jacobian_s2);

void BM_solve_s1(benchmark::State& state) {
  const ModelConstants mc = table3(1100.0, 110.0);
  VecX y0(4);
  y0 << 0.37, 6.4, 0.24, 5.6;
  for (auto _ : state) {
    auto rep = solve(mc, StructureId::S1, y0);
    benchmark::DoNotOptimize(rep.residual_norm);
  }
}
BENCHMARK(BM_solve_s1);

void BM_tangent_s2(benchmark::State& state) {
  const CarParams car = CarParams::solar_car();
  const Bounds base{1081.0, 100.0, 110.0};
  const ModelConstants mc = normalize(car, base);
  const VecX y = s2_vector(mc);
  Homotopy h = make_shooting_homotopy(car, base, StructureId::S2,
                                      HomotopyParam::IMax, "bench");
  h.lambda_scale = 1000.0;
  VecX t;
  for (auto _ : state) {
    tangent(h, y, 1081.0, nullptr, -1, t);
    benchmark::DoNotOptimize(t);
  }
}
BENCHMARK(BM_tangent_s2);

}  // namespace

BENCHMARK_MAIN();
