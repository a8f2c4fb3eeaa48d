#pragma once

#include <functional>
#include <random>

#include "evcar/types.hpp"

namespace evtest {

using evcar::Mat3;
using evcar::Mat6;
using evcar::Vec3;
using evcar::Vec6;

using Field3 = std::function<Vec3(const Vec3&)>;

// Central-difference Jacobian of a 3-field. Exact to roundoff for the
// polynomial fields of this model.
inline Mat3 numeric_jacobian(const Field3& f, const Vec3& x, double h = 1e-6) {
  Mat3 J;
  for (int j = 0; j < 3; ++j) {
    Vec3 hi = x, lo = x;
    hi(j) += h;
    lo(j) -= h;
    J.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

// Lie bracket [f, g](x) = dg(x) f(x) - df(x) g(x) by finite differences.
inline Vec3 numeric_bracket(const Field3& f, const Field3& g, const Vec3& x,
                            double h = 1e-6) {
  return numeric_jacobian(g, x, h) * f(x) - numeric_jacobian(f, x, h) * g(x);
}

using Field6 = std::function<Vec6(const Vec6&)>;

inline Mat6 numeric_jacobian6(const Field6& f, const Vec6& z, double h = 1e-6) {
  Mat6 J;
  for (int j = 0; j < 6; ++j) {
    Vec6 hi = z, lo = z;
    hi(j) += h;
    lo(j) -= h;
    J.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

inline Vec3 random_vec3(std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  return Vec3(d(rng), d(rng), d(rng));
}

inline Vec6 random_vec6(std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vec6 z;
  for (int i = 0; i < 6; ++i) z(i) = d(rng);
  return z;
}

}  // namespace evtest
