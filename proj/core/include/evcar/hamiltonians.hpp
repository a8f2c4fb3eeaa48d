#pragma once

#include "evcar/model.hpp"
#include "evcar/types.hpp"

namespace evcar {

/// The four true Hamiltonians driving the arcs: positive/negative bang and
/// the two constraint-boundary flows.
enum class HamiltonianId { HPlus, HMinus, HC1, HC3 };

const char* to_string(HamiltonianId id);

/// Poisson-bracket lifts at a phase point. H1 is the switching function,
/// H01 its derivative and H001 its second derivative along any bang arc
/// (H101 vanishes identically).
struct LiftValues {
  double H0;
  double H1;
  double H01;
  double H001;
};
LiftValues lifts(const ModelConstants& mc, const PhasePoint& z);

/// Constraint multipliers along boundary arcs (upper bounds).
struct Multipliers {
  double eta_c1;  // -k5 p3
  double eta_c3;  // -k3 p2
};
Multipliers multipliers(const ModelConstants& mc, const PhasePoint& z);

/// Hamiltonian value, canonical vector field and its exact Jacobian.
struct HamiltonianField {
  double H;
  Vec6 dz;
  Mat6 jacobian;
};
HamiltonianField ham_field(const ModelConstants& mc, HamiltonianId id,
                           const PhasePoint& z);

/// Value of the true Hamiltonian at z.
double ham_value(const ModelConstants& mc, HamiltonianId id, const Vec6& z);

/// Right-hand side only; hot path of the integrators.
void ham_rhs(const ModelConstants& mc, HamiltonianId id, const Vec6& z, Vec6& dz);

/// Right-hand side plus Jacobian, for the variational system.
void ham_rhs_jac(const ModelConstants& mc, HamiltonianId id, const Vec6& z,
                 Vec6& dz, Mat6& jac);

/// Control realized by the arc type at state x (+1, -1 or the boundary
/// feedback).
double control_value(const ModelConstants& mc, HamiltonianId id, const Vec3& x);

/// Constraint multiplier realized by the arc type (zero on bang arcs).
double eta_value(const ModelConstants& mc, HamiltonianId id, const PhasePoint& z);

}  // namespace evcar
