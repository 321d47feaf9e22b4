// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topomo/motion/corpus.hpp"
#include "topomo/skeleton/bvh.hpp"

namespace topomo {

struct IngestOptions {
  bool resample = false;  // stretch clips outside [20, 240] frames into range
  std::string species;    // default: the file stem
  double test_fraction = kDefaultTestFraction;
  std::uint64_t seed = 0;
};

struct IngestRejection {
  std::string path;
  std::string reason;
};

struct IngestReport {
  Corpus corpus;
  std::vector<IngestRejection> rejected;
};

/// Linear interpolation of translations and slerp of rotations onto
/// `frames` evenly spaced samples spanning the same time interval.
std::vector<Pose> resample_poses(std::span<const Pose> poses, std::size_t frames);

/// Normalize skeleton scale, align, and compute velocities for one clip.
CorpusEntry entry_from_clip(const BvhClip& clip, SkeletonGraph& normalized_out, bool resample);

/// Parses each file; failures (parse errors, frame range) are listed in the
/// report rather than aborting. A sidecar "<file>.txt" supplies the detail
/// prompt if present.
IngestReport ingest_bvh_files(std::span<const std::string> paths, const IngestOptions& options);

}  // namespace topomo
