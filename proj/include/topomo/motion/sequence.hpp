// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "topomo/numerics/tensor.hpp"
#include "topomo/skeleton/rotation.hpp"
#include "topomo/skeleton/skeleton.hpp"

namespace topomo {

// Per-joint feature layout: [position 3 | 6D rotation 6 | velocity 3].
inline constexpr std::size_t kMotionFeatureWidth = 12;
inline constexpr std::size_t kPositionOffset = 0;
inline constexpr std::size_t kRotationOffset = 3;
inline constexpr std::size_t kVelocityOffset = 9;

inline constexpr std::size_t kMinCorpusFrames = 20;
inline constexpr std::size_t kMaxCorpusFrames = 240;

/// (T, K, 12) frames. The root slot holds its absolute position and global
/// rotation; other joints hold world position minus root position and their
/// rotation relative to the parent.
struct MotionSequence {
  Tensor frames;
  double fps = 30.0;
  std::string species;

  std::size_t num_frames() const { return frames.dim(0); }
  std::size_t num_joints() const { return frames.dim(1); }

  std::span<const double> feature(std::size_t t, std::size_t j) const;
  std::span<double> feature(std::size_t t, std::size_t j);

  Vec3 position(std::size_t t, std::size_t j) const;
  void set_position(std::size_t t, std::size_t j, const Vec3& p);
  Vec3 velocity(std::size_t t, std::size_t j) const;
  void set_velocity(std::size_t t, std::size_t j, const Vec3& v);
  /// Gram-Schmidt reconstruction of the stored 6D block.
  Mat3 rotation(std::size_t t, std::size_t j) const;
  void set_rotation(std::size_t t, std::size_t j, const Mat3& r);

  /// Shape, finiteness, and 6D orthonormality within `rot_tol`. With
  /// `corpus_range` the frame count must lie in [20, 240].
  void validate(bool corpus_range, double rot_tol = 1e-4) const;

  friend bool operator==(const MotionSequence&, const MotionSequence&) = default;
};

MotionSequence make_motion(std::size_t frames, std::size_t joints, double fps = 30.0, std::string species = {});

/// (T, K, 3) positions -> (T, K, 3) with v[0] = 0 and v[t] = p[t] - p[t-1].
Tensor compute_velocities(const Tensor& positions);
/// Recomputes the velocity block of `m` from its position block.
void refresh_velocities(MotionSequence& m);

/// One frame of joint-local transforms. `translation[j]` is joint j's offset
/// from its parent in the parent frame; for the root it is the world position.
struct Pose {
  std::vector<Mat3> local;
  std::vector<Vec3> translation;
};

Pose rest_pose(const SkeletonGraph& s);

/// Forward kinematics over a pose sequence into the feature layout,
/// velocities included.
MotionSequence motion_from_poses(const SkeletonGraph& s, std::span<const Pose> poses, double fps,
                                 std::string species = {});

/// Inverse of motion_from_poses for one frame: local rotations from the 6D
/// blocks and translations recovered from positions.
Pose pose_at(const SkeletonGraph& s, const MotionSequence& m, std::size_t t);

/// Rest pose held for `frames` frames.
MotionSequence rest_motion(const SkeletonGraph& s, std::size_t frames, double fps = 30.0);

/// Replaces every 6D block by its Gram-Schmidt projection.
void orthonormalize_rotations(MotionSequence& m);

}  // namespace topomo
