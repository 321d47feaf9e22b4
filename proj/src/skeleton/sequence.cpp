// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/motion/sequence.hpp"

#include <cmath>
#include <utility>

namespace topomo {

std::span<const double> MotionSequence::feature(std::size_t t, std::size_t j) const {
  return frames.data().subspan((t * num_joints() + j) * kMotionFeatureWidth, kMotionFeatureWidth);
}

std::span<double> MotionSequence::feature(std::size_t t, std::size_t j) {
  return frames.data().subspan((t * num_joints() + j) * kMotionFeatureWidth, kMotionFeatureWidth);
}

Vec3 MotionSequence::position(std::size_t t, std::size_t j) const {
  const auto f = feature(t, j);
  return {f[kPositionOffset], f[kPositionOffset + 1], f[kPositionOffset + 2]};
}

void MotionSequence::set_position(std::size_t t, std::size_t j, const Vec3& p) {
  auto f = feature(t, j);
  for (int k = 0; k < 3; ++k) f[kPositionOffset + k] = p[k];
}

Vec3 MotionSequence::velocity(std::size_t t, std::size_t j) const {
  const auto f = feature(t, j);
  return {f[kVelocityOffset], f[kVelocityOffset + 1], f[kVelocityOffset + 2]};
}

void MotionSequence::set_velocity(std::size_t t, std::size_t j, const Vec3& v) {
  auto f = feature(t, j);
  for (int k = 0; k < 3; ++k) f[kVelocityOffset + k] = v[k];
}

Mat3 MotionSequence::rotation(std::size_t t, std::size_t j) const {
  return from_6d(feature(t, j).subspan(kRotationOffset, 6));
}

void MotionSequence::set_rotation(std::size_t t, std::size_t j, const Mat3& r) {
  const auto six = to_6d(r);
  auto f = feature(t, j);
  for (std::size_t k = 0; k < 6; ++k) f[kRotationOffset + k] = six[k];
}

void MotionSequence::validate(bool corpus_range, double rot_tol) const {
  if (frames.rank() != 3 || frames.dim(2) != kMotionFeatureWidth) {
    throw DimensionError("motion frames must be (T, K, 12), got " + shape_string(frames.shape()));
  }
  const std::size_t t_count = num_frames();
  if (corpus_range && (t_count < kMinCorpusFrames || t_count > kMaxCorpusFrames)) {
    throw DataError("motion has " + std::to_string(t_count) + " frames; stored sequences need 20..240");
  }
  if (!frames.all_finite()) throw NumericalError("motion contains non-finite values");
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t j = 0; j < num_joints(); ++j) {
      const auto six = feature(t, j).subspan(kRotationOffset, 6);
      const Vec3 a(six[0], six[1], six[2]), b(six[3], six[4], six[5]);
      const Mat3 r = from_6d(six);
      if ((r.col(0) - a).norm() > rot_tol || (r.col(1) - b).norm() > rot_tol) {
        throw DataError("rotation block at frame " + std::to_string(t) + ", joint " + std::to_string(j) +
                        " is not orthonormal");
      }
    }
  }
}

MotionSequence make_motion(std::size_t frames, std::size_t joints, double fps, std::string species) {
  return MotionSequence{Tensor({frames, joints, kMotionFeatureWidth}), fps, std::move(species)};
}

Tensor compute_velocities(const Tensor& positions) {
  if (positions.rank() != 3 || positions.dim(2) != 3) {
    throw DimensionError("compute_velocities expects (T, K, 3), got " + shape_string(positions.shape()));
  }
  Tensor v(positions.shape());
  const std::size_t stride = positions.dim(1) * 3;
  const auto p = positions.data();
  auto out = v.data();
  for (std::size_t t = 1; t < positions.dim(0); ++t)
    for (std::size_t i = 0; i < stride; ++i) out[t * stride + i] = p[t * stride + i] - p[(t - 1) * stride + i];
  return v;
}

void refresh_velocities(MotionSequence& m) {
  for (std::size_t j = 0; j < m.num_joints(); ++j) m.set_velocity(0, j, Vec3::Zero());
  for (std::size_t t = 1; t < m.num_frames(); ++t)
    for (std::size_t j = 0; j < m.num_joints(); ++j) {
      const auto cur = m.feature(t, j), prev = m.feature(t - 1, j);
      auto f = m.feature(t, j);
      for (std::size_t k = 0; k < 3; ++k) f[kVelocityOffset + k] = cur[kPositionOffset + k] - prev[kPositionOffset + k];
    }
}

Pose rest_pose(const SkeletonGraph& s) {
  Pose p;
  p.local.assign(s.size(), Mat3::Identity());
  for (const auto& j : s.joints) p.translation.emplace_back(j.offset[0], j.offset[1], j.offset[2]);
  return p;
}

MotionSequence motion_from_poses(const SkeletonGraph& s, std::span<const Pose> poses, double fps,
                                 std::string species) {
  s.validate();
  if (poses.empty()) throw DimensionError("motion needs at least one frame");
  const std::size_t k = s.size();
  MotionSequence m = make_motion(poses.size(), k, fps, std::move(species));
  std::vector<Mat3> world_rot(k);
  std::vector<Vec3> world_pos(k);
  for (std::size_t t = 0; t < poses.size(); ++t) {
    const Pose& pose = poses[t];
    if (pose.local.size() != k || pose.translation.size() != k) {
      throw DimensionError("pose at frame " + std::to_string(t) + " does not match the skeleton's joint count");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (j == 0) {
        world_rot[0] = pose.local[0];
        world_pos[0] = pose.translation[0];
      } else {
        const auto p = static_cast<std::size_t>(s.joints[j].parent);
        world_rot[j] = world_rot[p] * pose.local[j];
        world_pos[j] = world_pos[p] + world_rot[p] * pose.translation[j];
      }
      m.set_position(t, j, j == 0 ? world_pos[0] : Vec3(world_pos[j] - world_pos[0]));
      m.set_rotation(t, j, pose.local[j]);
    }
  }
  refresh_velocities(m);
  return m;
}

Pose pose_at(const SkeletonGraph& s, const MotionSequence& m, std::size_t t) {
  const std::size_t k = s.size();
  if (m.num_joints() != k) throw DimensionError("motion joint count does not match the skeleton");
  Pose pose;
  pose.local.resize(k);
  pose.translation.resize(k);
  std::vector<Mat3> world_rot(k);
  std::vector<Vec3> world_pos(k);
  for (std::size_t j = 0; j < k; ++j) {
    pose.local[j] = m.rotation(t, j);
    if (j == 0) {
      world_rot[0] = pose.local[0];
      world_pos[0] = m.position(t, 0);
      pose.translation[0] = world_pos[0];
    } else {
      const auto p = static_cast<std::size_t>(s.joints[j].parent);
      world_rot[j] = world_rot[p] * pose.local[j];
      world_pos[j] = m.position(t, j) + world_pos[0];
      pose.translation[j] = world_rot[p].transpose() * (world_pos[j] - world_pos[p]);
    }
  }
  return pose;
}

MotionSequence rest_motion(const SkeletonGraph& s, std::size_t frames, double fps) {
  const std::vector<Pose> poses(frames, rest_pose(s));
  return motion_from_poses(s, poses, fps, s.species);
}

void orthonormalize_rotations(MotionSequence& m) {
  for (std::size_t t = 0; t < m.num_frames(); ++t)
    for (std::size_t j = 0; j < m.num_joints(); ++j) m.set_rotation(t, j, m.rotation(t, j));
}

}  // namespace topomo
