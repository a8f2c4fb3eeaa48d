#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "evcar/hamiltonians.hpp"
#include "test_support.hpp"

using namespace evcar;

namespace {

ModelConstants table3(double i_max, double v_max) {
  return normalize(CarParams::solar_car(), Bounds{i_max, 100.0, v_max});
}

// Canonical Poisson bracket {F, G} from finite-difference gradients. Exact to
// roundoff for the polynomial lifts of this model.
double numeric_poisson(const std::function<double(const Vec6&)>& F,
                       const std::function<double(const Vec6&)>& G, const Vec6& z,
                       double h = 1e-6) {
  Vec6 gF, gG;
  for (int i = 0; i < 6; ++i) {
    Vec6 hi = z, lo = z;
    hi(i) += h;
    lo(i) -= h;
    gF(i) = (F(hi) - F(lo)) / (2.0 * h);
    gG(i) = (G(hi) - G(lo)) / (2.0 * h);
  }
  // {F, G} = dG(vec F) with vec F = (dF/dp, -dF/dx).
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) acc += gG(i) * gF(i + 3) - gG(i + 3) * gF(i);
  return acc;
}

}  // namespace

TEST_CASE("lift values at reference covectors") {
  const ModelConstants mc = table3(1100.0, 110.0);
  PhasePoint z;
  z.x = Vec3(0.2, 0.5, 0.4);

  z.p = Vec3(0.0, 1.0, 0.0);
  const LiftValues l = lifts(mc, z);
  CHECK(l.H1 == 0.0);
  CHECK(l.H01 == 0.0);
  CHECK(l.H001 == doctest::Approx(mc.k7 * mc.k3 * mc.k5));
  CHECK(l.H001 > 0.0);

  z.p = Vec3(1.0, 0.0, 0.0);
  CHECK(lifts(mc, z).H1 == doctest::Approx(mc.k7));
}

TEST_CASE("multiplier signs") {
  const ModelConstants mc = table3(150.0, 70.0);
  PhasePoint z;
  z.p = Vec3(0.3, 2.0, 0.0);
  CHECK(multipliers(mc, z).eta_c1 == 0.0);
  CHECK(multipliers(mc, z).eta_c3 < 0.0);  // p2 > 0
}

TEST_CASE("canonical fields match their Jacobians (finite differences)") {
  const ModelConstants mc = table3(150.0, 70.0);
  std::mt19937 rng(31);
  for (HamiltonianId id : {HamiltonianId::HPlus, HamiltonianId::HMinus,
                           HamiltonianId::HC1, HamiltonianId::HC3}) {
    auto f = [&](const Vec6& z) {
      Vec6 dz;
      ham_rhs(mc, id, z, dz);
      return dz;
    };
    for (int i = 0; i < 100; ++i) {
      const Vec6 z = evtest::random_vec6(rng, -2.0, 2.0);
      Vec6 dz;
      Mat6 J;
      ham_rhs_jac(mc, id, z, dz, J);
      const Mat6 J_fd = evtest::numeric_jacobian6(f, z);
      const double scale = std::max(1.0, J.norm());
      CHECK((J - J_fd).norm() <= 1e-5 * scale);
    }
  }
}

TEST_CASE("p2 is a first integral of every field") {
  const ModelConstants mc = table3(150.0, 70.0);
  std::mt19937 rng(37);
  for (int i = 0; i < 50; ++i) {
    const Vec6 z = evtest::random_vec6(rng, -2.0, 2.0);
    for (HamiltonianId id : {HamiltonianId::HPlus, HamiltonianId::HMinus,
                             HamiltonianId::HC1, HamiltonianId::HC3}) {
      Vec6 dz;
      ham_rhs(mc, id, z, dz);
      CHECK(dz(4) == 0.0);
    }
  }
}

TEST_CASE("field is the canonical lift of the Hamiltonian value") {
  // dH/dx = -dp/dt and dH/dp = dx/dt, checked by differentiating ham_value.
  const ModelConstants mc = table3(150.0, 70.0);
  std::mt19937 rng(41);
  for (HamiltonianId id : {HamiltonianId::HPlus, HamiltonianId::HMinus,
                           HamiltonianId::HC1, HamiltonianId::HC3}) {
    for (int i = 0; i < 25; ++i) {
      const Vec6 z = evtest::random_vec6(rng, -2.0, 2.0);
      Vec6 dz;
      ham_rhs(mc, id, z, dz);
      const double h = 1e-6;
      for (int k = 0; k < 6; ++k) {
        Vec6 hi = z, lo = z;
        hi(k) += h;
        lo(k) -= h;
        const double g = (ham_value(mc, id, hi) - ham_value(mc, id, lo)) / (2 * h);
        const double expected = (k < 3) ? -dz(k + 3) : dz(k - 3);
        CHECK(g == doctest::Approx(expected).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("switching-function bracket chain from the lifts") {
  const ModelConstants mc = table3(1100.0, 110.0);
  auto H0 = [&](const Vec6& z) { return lifts(mc, PhasePoint::from_flat(z)).H0; };
  auto H1 = [&](const Vec6& z) { return lifts(mc, PhasePoint::from_flat(z)).H1; };
  auto H01 = [&](const Vec6& z) { return lifts(mc, PhasePoint::from_flat(z)).H01; };
  auto H001 = [&](const Vec6& z) {
    return lifts(mc, PhasePoint::from_flat(z)).H001;
  };

  std::mt19937 rng(43);
  for (int i = 0; i < 100; ++i) {
    const Vec6 z = evtest::random_vec6(rng, -2.0, 2.0);
    CHECK(numeric_poisson(H0, H1, z) ==
          doctest::Approx(H01(z)).epsilon(1e-6).scale(1.0));
    CHECK(numeric_poisson(H0, H01, z) ==
          doctest::Approx(H001(z)).epsilon(1e-6).scale(1.0));
    // H101 and H1001 vanish identically.
    CHECK(std::abs(numeric_poisson(H1, H01, z)) <= 1e-10);
    CHECK(std::abs(numeric_poisson(H1, H001, z)) <= 1e-10);
  }
}

TEST_CASE("true Hamiltonian values on the constraint boundaries") {
  const ModelConstants mc = table3(150.0, 70.0);
  // On {c1 = 0, H1 = 0} the constrained Hamiltonian equals the free one.
  Vec6 z;
  z << 1.0, 0.2, 0.6, 0.0, 2.0, -0.4;
  const LiftValues l = lifts(mc, PhasePoint::from_flat(z));
  CHECK(ham_value(mc, HamiltonianId::HC1, z) == doctest::Approx(l.H0));

  const double x1b = boundary_controls(mc, Vec3::Zero()).x1_on_c3;
  Vec6 zb;
  zb << x1b, 0.2, 1.0, 0.0, 2.0, 0.0;
  const LiftValues lb = lifts(mc, PhasePoint::from_flat(zb));
  CHECK(ham_value(mc, HamiltonianId::HC3, zb) == doctest::Approx(lb.H0));
}
