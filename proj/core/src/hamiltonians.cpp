#include "evcar/hamiltonians.hpp"

namespace evcar {

const char* to_string(HamiltonianId id) {
  switch (id) {
    case HamiltonianId::HPlus: return "H+";
    case HamiltonianId::HMinus: return "H-";
    case HamiltonianId::HC1: return "Hc1";
    case HamiltonianId::HC3: return "Hc3";
  }
  return "?";
}

LiftValues lifts(const ModelConstants& mc, const PhasePoint& z) {
  const Vec3& x = z.x;
  const Vec3& p = z.p;
  LiftValues l;
  l.H0 = p(0) * (mc.k1 * x(0) + mc.k2 * x(2)) + p(1) * mc.k3 * x(2) +
         p(2) * (mc.k4 + mc.k5 * x(0) + mc.k6 * x(2) * x(2));
  l.H1 = mc.k7 * p(0);
  l.H01 = -mc.k7 * (mc.k1 * p(0) + mc.k5 * p(2));
  l.H001 = mc.k7 * ((mc.k1 * mc.k1 + mc.k2 * mc.k5) * p(0) + mc.k3 * mc.k5 * p(1) +
                    mc.k5 * (mc.k1 + 2.0 * mc.k6 * x(2)) * p(2));
  return l;
}

Multipliers multipliers(const ModelConstants& mc, const PhasePoint& z) {
  return Multipliers{-mc.k5 * z.p(2), -mc.k3 * z.p(1)};
}

double control_value(const ModelConstants& mc, HamiltonianId id, const Vec3& x) {
  switch (id) {
    case HamiltonianId::HPlus: return 1.0;
    case HamiltonianId::HMinus: return -1.0;
    case HamiltonianId::HC1: return boundary_controls(mc, x).u_c1;
    case HamiltonianId::HC3: return boundary_controls(mc, x).u_c3;
  }
  return 0.0;
}

double eta_value(const ModelConstants& mc, HamiltonianId id, const PhasePoint& z) {
  switch (id) {
    case HamiltonianId::HC1: return multipliers(mc, z).eta_c1;
    case HamiltonianId::HC3: return multipliers(mc, z).eta_c3;
    default: return 0.0;
  }
}

double ham_value(const ModelConstants& mc, HamiltonianId id, const Vec6& z) {
  const PhasePoint pp = PhasePoint::from_flat(z);
  const LiftValues l = lifts(mc, pp);
  switch (id) {
    case HamiltonianId::HPlus: return l.H0 + l.H1;
    case HamiltonianId::HMinus: return l.H0 - l.H1;
    case HamiltonianId::HC1: {
      const auto bc = boundary_controls(mc, pp.x);
      const auto m = multipliers(mc, pp);
      return l.H0 + bc.u_c1 * l.H1 + m.eta_c1 * (pp.x(0) - 1.0);
    }
    case HamiltonianId::HC3: {
      const auto bc = boundary_controls(mc, pp.x);
      const auto m = multipliers(mc, pp);
      return l.H0 + bc.u_c3 * l.H1 + m.eta_c3 * (pp.x(2) - 1.0);
    }
  }
  return 0.0;
}

// The canonical fields below are written out component-wise. All of them are
// polynomial of degree <= 2 in z, so the Jacobians are exact.
void ham_rhs(const ModelConstants& mc, HamiltonianId id, const Vec6& z, Vec6& dz) {
  const double x1 = z(0), x3 = z(2);
  const double p1 = z(3), p2 = z(4), p3 = z(5);
  switch (id) {
    case HamiltonianId::HPlus:
    case HamiltonianId::HMinus: {
      const double u = (id == HamiltonianId::HPlus) ? 1.0 : -1.0;
      dz(0) = mc.k1 * x1 + mc.k2 * x3 + mc.k7 * u;
      dz(1) = mc.k3 * x3;
      dz(2) = mc.k4 + mc.k5 * x1 + mc.k6 * x3 * x3;
      dz(3) = -(mc.k1 * p1 + mc.k5 * p3);
      dz(4) = 0.0;
      dz(5) = -(mc.k2 * p1 + mc.k3 * p2 + 2.0 * mc.k6 * x3 * p3);
      return;
    }
    case HamiltonianId::HC1: {
      // u_c1 H1 cancels the k7 u term against -(k1 + k2 x3); eta_c1 feeds the
      // x1 slot of the adjoint and the c1 slot of dx3.
      dz(0) = mc.k1 * (x1 - 1.0);
      dz(1) = mc.k3 * x3;
      dz(2) = mc.k4 + mc.k5 + mc.k6 * x3 * x3;
      dz(3) = -mc.k1 * p1;
      dz(4) = 0.0;
      dz(5) = -(mc.k3 * p2 + 2.0 * mc.k6 * x3 * p3);
      return;
    }
    case HamiltonianId::HC3: {
      const double uc3 = boundary_controls(mc, Vec3::Zero()).u_c3;
      dz(0) = mc.k1 * x1 + mc.k2 * x3 + mc.k7 * uc3;
      dz(1) = mc.k3;  // k3 x3 - k3 (x3 - 1)
      dz(2) = mc.k4 + mc.k5 * x1 + mc.k6 * x3 * x3;
      dz(3) = -(mc.k1 * p1 + mc.k5 * p3);
      dz(4) = 0.0;
      dz(5) = -(mc.k2 * p1 + 2.0 * mc.k6 * x3 * p3);
      return;
    }
  }
}

void ham_rhs_jac(const ModelConstants& mc, HamiltonianId id, const Vec6& z,
                 Vec6& dz, Mat6& jac) {
  ham_rhs(mc, id, z, dz);
  const double x3 = z(2), p3 = z(5);
  jac.setZero();
  switch (id) {
    case HamiltonianId::HPlus:
    case HamiltonianId::HMinus:
    case HamiltonianId::HC3: {
      jac(0, 0) = mc.k1;
      jac(0, 2) = mc.k2;
      jac(1, 2) = (id == HamiltonianId::HC3) ? 0.0 : mc.k3;
      jac(2, 0) = mc.k5;
      jac(2, 2) = 2.0 * mc.k6 * x3;
      jac(3, 3) = -mc.k1;
      jac(3, 5) = -mc.k5;
      jac(5, 2) = -2.0 * mc.k6 * p3;
      jac(5, 3) = -mc.k2;
      jac(5, 5) = -2.0 * mc.k6 * x3;
      if (id != HamiltonianId::HC3) jac(5, 4) = -mc.k3;
      return;
    }
    case HamiltonianId::HC1: {
      jac(0, 0) = mc.k1;
      jac(1, 2) = mc.k3;
      jac(2, 2) = 2.0 * mc.k6 * x3;
      jac(3, 3) = -mc.k1;
      jac(5, 2) = -2.0 * mc.k6 * p3;
      jac(5, 4) = -mc.k3;
      jac(5, 5) = -2.0 * mc.k6 * x3;
      return;
    }
  }
}

HamiltonianField ham_field(const ModelConstants& mc, HamiltonianId id,
                           const PhasePoint& z) {
  HamiltonianField out;
  const Vec6 zf = z.flat();
  out.H = ham_value(mc, id, zf);
  ham_rhs_jac(mc, id, zf, out.dz, out.jacobian);
  return out;
}

}  // namespace evcar
