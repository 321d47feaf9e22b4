// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

namespace topomo {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

enum class Axis : int { kX = 0, kY = 1, kZ = 2 };

Mat3 axis_rotation(Axis axis, double radians);
Mat3 yaw_rotation(double radians);

/// R = R_{a0}(angles[0]) * R_{a1}(angles[1]) * R_{a2}(angles[2]); axes must be
/// pairwise distinct. Angles in radians.
Mat3 euler_to_matrix(const std::array<Axis, 3>& order, const std::array<double, 3>& angles);

/// Inverse of euler_to_matrix. The middle angle lies in [-pi/2, pi/2] and the
/// outer two in (-pi, pi]; at gimbal lock the last angle is set to 0.
std::array<double, 3> matrix_to_euler(const Mat3& r, const std::array<Axis, 3>& order);

/// First two columns, column-major: [c0.x, c0.y, c0.z, c1.x, c1.y, c1.z].
std::array<double, 6> to_6d(const Mat3& r);
/// Gram-Schmidt on the two stored columns; third column by cross product.
/// Throws NumericalError when the columns are degenerate.
Mat3 from_6d(std::span<const double> v);

/// Heading of a rotation: angle about +Y that takes +Z to the horizontal
/// projection of r * +Z.
double yaw_of(const Mat3& r);

inline double deg_to_rad(double d) { return d * (EIGEN_PI / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / EIGEN_PI); }

}  // namespace topomo
