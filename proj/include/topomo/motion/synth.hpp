// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "topomo/motion/corpus.hpp"

namespace topomo {

inline constexpr std::array<const char*, 4> kMotionClasses{"walk", "jump", "idle", "turn"};

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n_species = 4;
  std::size_t seqs_per_species = 8;
  std::size_t joint_min = 8;
  std::size_t joint_max = 24;
  std::size_t frame_min = 40;
  std::size_t frame_max = 80;
  double fps = 30.0;
  double test_fraction = kDefaultTestFraction;
  // When false, prompts say "a creature" instead of naming the species, so the
  // skeleton is the only carrier of species identity.
  bool species_in_text = true;
};

/// Procedural stand-in for a multi-species capture corpus. Each species gets a
/// seeded random tree skeleton and its own gait signature (frequency, limb
/// phases, swing axes); each sequence instantiates one motion class with
/// jittered amplitude and frequency. Output is aligned and normalized.
Corpus synth_corpus(const SynthOptions& options);

/// A seeded random skeleton in depth-first order, unit longest chain.
SkeletonGraph random_skeleton(std::size_t joints, std::uint64_t seed, const std::string& name);

}  // namespace topomo
