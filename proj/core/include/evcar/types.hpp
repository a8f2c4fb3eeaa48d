#pragma once

#include <Eigen/Dense>

namespace evcar {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Point of the cotangent bundle in normalized coordinates: state x and
/// adjoint covector p.
struct PhasePoint {
  Vec3 x = Vec3::Zero();
  Vec3 p = Vec3::Zero();

  Vec6 flat() const {
    Vec6 z;
    z << x, p;
    return z;
  }
  static PhasePoint from_flat(const Vec6& z) {
    return PhasePoint{z.head<3>(), z.tail<3>()};
  }
};

}  // namespace evcar
