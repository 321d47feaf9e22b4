// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topomo/motion/sequence.hpp"
#include "topomo/skeleton/skeleton.hpp"

namespace topomo {

struct TextRecord {
  std::string summary;  // concise
  std::string detail;   // fine-grained phrase
  std::string motion_class;
  std::string species;

  friend bool operator==(const TextRecord&, const TextRecord&) = default;
};

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

struct CorpusEntry {
  std::size_t skeleton = 0;  // index into Corpus::skeletons
  MotionSequence motion;
  TextRecord text;
  Split split = Split::kTrain;
  double scale_factor = 1.0;  // skeleton normalization multiplier applied at ingest

  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

struct Corpus {
  std::vector<SkeletonGraph> skeletons;
  std::vector<CorpusEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  const SkeletonGraph& skeleton_of(const CorpusEntry& e) const { return skeletons.at(e.skeleton); }
  std::vector<std::size_t> indices(Split split) const;

  /// Runs the per-motion invariants over every entry (frame range,
  /// orthonormal rotations, finite values) plus skeleton/joint-count agreement.
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline constexpr double kDefaultTestFraction = 0.05;

/// Seeded, deterministic: a permutation of the entries puts the first
/// round(test_fraction * N) into TEST.
void assign_splits(Corpus& c, double test_fraction, std::uint64_t seed);

inline constexpr std::uint32_t kCorpusVersion = 1;

void save_corpus(const Corpus& c, const std::string& path);
Corpus load_corpus(const std::string& path);

/// One JSON object per line: index, split, species, motion_class, summary, detail.
void export_text_jsonl(const Corpus& c, const std::string& path);

/// The generator's conditioning prompt for an entry. With the motion summary
/// enabled it is "<summary>. <detail>", otherwise just the detail.
std::string prompt_text(const TextRecord& t, bool with_summary);

}  // namespace topomo
