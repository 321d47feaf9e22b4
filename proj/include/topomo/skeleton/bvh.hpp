// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "topomo/motion/sequence.hpp"
#include "topomo/numerics/tensor.hpp"
#include "topomo/skeleton/skeleton.hpp"

namespace topomo {

enum class Channel : std::uint8_t { kXposition, kYposition, kZposition, kXrotation, kYrotation, kZrotation };

std::string_view channel_name(Channel c);

/// Per-joint channel declarations plus which leaves are written as End Site.
struct BvhLayout {
  std::vector<std::vector<Channel>> channels;
  std::vector<std::uint8_t> end_site;

  std::size_t width() const;
  /// Root: XYZ position + ZXY rotation; other joints: ZXY rotation. Leaves
  /// named "<parent>_End" become End Site blocks.
  static BvhLayout standard(const SkeletonGraph& s);

  friend bool operator==(const BvhLayout&, const BvhLayout&) = default;
};

struct BvhClip {
  SkeletonGraph skeleton;
  BvhLayout layout;
  Tensor frames;  // (F, width) raw channel values; angles in degrees
  double frame_time = 1.0 / 30.0;

  std::size_t frame_count() const { return frames.empty() ? 0 : frames.dim(0); }
};

/// Joints appear in file order. End Site blocks become leaf joints named
/// "<parent>_End". Errors are ParseError carrying the offending line.
BvhClip parse_bvh(std::string_view text);
BvhClip load_bvh(const std::string& path);

/// Channel values -> per-frame poses (forward kinematics input). Translation
/// comes from position channels when declared, else from the rest offset.
std::vector<Pose> clip_poses(const BvhClip& clip);
/// Poses through forward kinematics into the motion feature layout.
MotionSequence clip_to_motion(const BvhClip& clip);

/// Writes `motion` against skeleton `s`. Without a layout the standard one is
/// used.
std::string export_bvh(const SkeletonGraph& s, const MotionSequence& motion, double frame_time,
                       const BvhLayout* layout = nullptr);

}  // namespace topomo
