// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/motion/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "topomo/motion/align.hpp"

namespace topomo {

std::vector<Pose> resample_poses(std::span<const Pose> poses, std::size_t frames) {
  if (poses.empty() || frames == 0) throw DimensionError("resample_poses needs non-empty input and output");
  std::vector<Pose> out;
  out.reserve(frames);
  const std::size_t n = poses.size();
  for (std::size_t i = 0; i < frames; ++i) {
    const double u = frames == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(frames - 1);
    const auto lo = std::min(static_cast<std::size_t>(u), n - 1);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double w = u - static_cast<double>(lo);
    Pose p = poses[lo];
    if (w > 0.0) {
      for (std::size_t j = 0; j < p.local.size(); ++j) {
        const Eigen::Quaterniond qa(poses[lo].local[j]), qb(poses[hi].local[j]);
        p.local[j] = qa.slerp(w, qb).toRotationMatrix();
        p.translation[j] = (1.0 - w) * poses[lo].translation[j] + w * poses[hi].translation[j];
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

CorpusEntry entry_from_clip(const BvhClip& clip, SkeletonGraph& normalized_out, bool resample) {
  std::vector<Pose> poses = clip_poses(clip);
  const std::size_t t = poses.size();
  double fps = 1.0 / clip.frame_time;
  if (t < kMinCorpusFrames || t > kMaxCorpusFrames) {
    if (!resample) {
      throw DataError("clip has " + std::to_string(t) + " frames; stored sequences need 20..240 (use --resample)");
    }
    if (t < 2) throw DataError("clip has " + std::to_string(t) + " frame(s); cannot resample");
    const std::size_t target = std::clamp(t, kMinCorpusFrames, kMaxCorpusFrames);
    poses = resample_poses(poses, target);
    fps *= static_cast<double>(target - 1) / static_cast<double>(t - 1);
  }
  const NormalizedSkeleton norm = normalize_skeleton(clip.skeleton);
  for (auto& p : poses)
    for (auto& tr : p.translation) tr *= norm.scale_factor;
  normalized_out = norm.skeleton;
  CorpusEntry e;
  e.motion = align_motion(motion_from_poses(norm.skeleton, poses, fps, norm.skeleton.species));
  e.scale_factor = norm.scale_factor;
  return e;
}

IngestReport ingest_bvh_files(std::span<const std::string> paths, const IngestOptions& options) {
  IngestReport report;
  for (const auto& path : paths) {
    try {
      BvhClip clip = load_bvh(path);
      const std::string stem = std::filesystem::path(path).stem().string();
      clip.skeleton.name = stem;
      clip.skeleton.species = options.species.empty() ? stem : options.species;
      SkeletonGraph skel;
      CorpusEntry e = entry_from_clip(clip, skel, options.resample);
      e.skeleton = report.corpus.skeletons.size();
      e.text.species = skel.species;
      e.text.summary = "a " + skel.species + " motion";
      e.text.motion_class = "unknown";
      std::ifstream side(path + ".txt");
      std::string line;
      if (side && std::getline(side, line) && !line.empty()) {
        e.text.detail = line;
      } else {
        e.text.detail = e.text.summary + ", from " + stem;
      }
      report.corpus.skeletons.push_back(std::move(skel));
      report.corpus.entries.push_back(std::move(e));
    } catch (const DataError& err) {
      report.rejected.push_back({path, err.what()});
    }
  }
  assign_splits(report.corpus, options.test_fraction, options.seed);
  return report;
}

}  // namespace topomo
