// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "topomo/motion/sequence.hpp"

namespace topomo {

/// Moves the frame-0 root to the origin and turns the sequence about +Y so the
/// frame-0 root forward axis (+Z in the root frame) projects onto world +Z.
/// Root position, root rotation, root-relative positions, and velocities are
/// all rotated; joint-local rotations are untouched.
MotionSequence align_motion(const MotionSequence& m);

/// Applies a rigid yaw about +Y plus a translation to the whole sequence.
MotionSequence apply_world_yaw(const MotionSequence& m, double radians, const Vec3& translation = Vec3::Zero());

}  // namespace topomo
