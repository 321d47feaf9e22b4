// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/skeleton/rotation.hpp"

#include <algorithm>
#include <cmath>

#include "topomo/numerics/error.hpp"

namespace topomo {

Mat3 axis_rotation(Axis axis, double radians) {
  const Vec3 unit = Vec3::Unit(static_cast<int>(axis));
  return Eigen::AngleAxisd(radians, unit).toRotationMatrix();
}

Mat3 yaw_rotation(double radians) { return axis_rotation(Axis::kY, radians); }

Mat3 euler_to_matrix(const std::array<Axis, 3>& order, const std::array<double, 3>& angles) {
  if (order[0] == order[1] || order[1] == order[2] || order[0] == order[2]) {
    throw UsageError("Euler order needs three distinct axes");
  }
  return axis_rotation(order[0], angles[0]) * axis_rotation(order[1], angles[1]) *
         axis_rotation(order[2], angles[2]);
}

std::array<double, 3> matrix_to_euler(const Mat3& r, const std::array<Axis, 3>& order) {
  const int i = static_cast<int>(order[0]), j = static_cast<int>(order[1]), k = static_cast<int>(order[2]);
  if (i == j || j == k || i == k) throw UsageError("Euler order needs three distinct axes");
  // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
  const double s = ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;
  const double sb = std::clamp(s * r(i, k), -1.0, 1.0);
  const double b = std::asin(sb);
  double a, c;
  if (std::fabs(sb) < 1.0 - 1e-12) {
    a = std::atan2(-s * r(j, k), r(k, k));
    c = std::atan2(-s * r(i, j), r(i, i));
  } else {
    // Gimbal lock: fold everything into the first angle.
    c = 0.0;
    const Mat3 first = r * axis_rotation(order[1], b).transpose();
    const int p = (i + 1) % 3, q = (i + 2) % 3;
    a = std::atan2(first(q, p), first(p, p));
  }
  return {a, b, c};
}

std::array<double, 6> to_6d(const Mat3& r) {
  return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

Mat3 from_6d(std::span<const double> v) {
  if (v.size() != 6) throw DimensionError("6D rotation needs 6 values");
  const Vec3 a(v[0], v[1], v[2]);
  const Vec3 b(v[3], v[4], v[5]);
  const double na = a.norm();
  if (!(na > 1e-12)) throw NumericalError("degenerate 6D rotation (zero first column)");
  const Vec3 c0 = a / na;
  const Vec3 b_perp = b - c0.dot(b) * c0;
  const double nb = b_perp.norm();
  if (!(nb > 1e-12)) throw NumericalError("degenerate 6D rotation (parallel columns)");
  const Vec3 c1 = b_perp / nb;
  Mat3 m;
  m.col(0) = c0;
  m.col(1) = c1;
  m.col(2) = c0.cross(c1);
  return m;
}

double yaw_of(const Mat3& r) {
  const Vec3 f = r * Vec3::UnitZ();
  return std::atan2(f.x(), f.z());
}

}  // namespace topomo
