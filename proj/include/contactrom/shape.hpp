#pragma once

// Shape functions for the linear planar elements (bilinear quadrilateral,
// linear triangle). Node ordering is counter-clockwise in both cases.

#include <array>
#include <cmath>

#include <Eigen/Core>

namespace contactrom::shape {

/// 2x2 Gauss rule on the reference square [-1,1]^2, all weights equal to 1.
inline constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)
inline constexpr std::array<std::array<double, 2>, 4> kQ4GaussPoints{{
    {-kGauss, -kGauss}, {kGauss, -kGauss}, {kGauss, kGauss}, {-kGauss, kGauss}}};

/// Reference coordinates of the four Q4 corners.
inline constexpr std::array<std::array<double, 2>, 4> kQ4Corners{{
    {-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}};

inline Eigen::Vector4d q4_values(double xi, double eta) {
  return {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
          0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
}

/// Rows: d/dxi, d/deta. Columns: corner nodes.
inline Eigen::Matrix<double, 2, 4> q4_local_gradients(double xi, double eta) {
  Eigen::Matrix<double, 2, 4> g;
  g << -0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta), -0.25 * (1 + eta),
      -0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi);
  return g;
}

/// Physical shape-function gradients of a Q4 at (xi, eta).
/// `coords` holds the corner coordinates column-wise. Returns the Jacobian
/// determinant through `det_j`.
inline Eigen::Matrix<double, 2, 4> q4_gradients(const Eigen::Matrix<double, 2, 4>& coords,
                                                double xi, double eta, double& det_j) {
  const Eigen::Matrix<double, 2, 4> local = q4_local_gradients(xi, eta);
  // J(a, b) = d x_b / d xi_a
  const Eigen::Matrix2d jac = local * coords.transpose();
  det_j = jac.determinant();
  return jac.inverse() * local;
}

/// Twice the signed area of the triangle (a, b, c).
inline double t3_twice_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                            const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
}

/// Constant gradients of the three linear triangle shape functions.
inline Eigen::Matrix<double, 2, 3> t3_gradients(const Eigen::Matrix<double, 2, 3>& coords,
                                                double& area) {
  const Eigen::Vector2d a = coords.col(0), b = coords.col(1), c = coords.col(2);
  const double two_a = t3_twice_area(a, b, c);
  area = 0.5 * two_a;
  Eigen::Matrix<double, 2, 3> g;
  g << b.y() - c.y(), c.y() - a.y(), a.y() - b.y(),
      c.x() - b.x(), a.x() - c.x(), b.x() - a.x();
  return g / two_a;
}

}  // namespace contactrom::shape
