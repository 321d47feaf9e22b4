// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/motion/align.hpp"

namespace topomo {

namespace {

MotionSequence transform(const MotionSequence& m, const Mat3& yaw, const Vec3& pre_shift, const Vec3& post_shift) {
  MotionSequence out = m;
  for (std::size_t t = 0; t < m.num_frames(); ++t) {
    for (std::size_t j = 0; j < m.num_joints(); ++j) {
      const Vec3 p = m.position(t, j);
      out.set_position(t, j, j == 0 ? Vec3(yaw * (p - pre_shift) + post_shift) : Vec3(yaw * p));
      out.set_velocity(t, j, yaw * m.velocity(t, j));
    }
    out.set_rotation(t, 0, yaw * m.rotation(t, 0));
  }
  return out;
}

}  // namespace

MotionSequence align_motion(const MotionSequence& m) {
  if (m.frames.empty() || m.num_frames() == 0) throw DimensionError("align_motion needs at least one frame");
  const Vec3 origin = m.position(0, 0);
  const double heading = yaw_of(m.rotation(0, 0));
  return transform(m, yaw_rotation(-heading), origin, Vec3::Zero());
}

MotionSequence apply_world_yaw(const MotionSequence& m, double radians, const Vec3& translation) {
  return transform(m, yaw_rotation(radians), Vec3::Zero(), translation);
}

}  // namespace topomo
