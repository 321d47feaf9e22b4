// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "topomo/generator/generator.hpp"
#include "topomo/metrics/metrics.hpp"
#include "topomo/rvq/rvq.hpp"
#include "topomo/skelembed/skelembed.hpp"

namespace topomo::cli {

inline constexpr const char* kConfigEnv = "TOPOMO_CONFIG";

struct MetricSettings {
  std::size_t pool_size = 32;
  std::size_t diversity_pairs = 300;
  std::size_t mm_prompts = 8;
  std::size_t mm_reps = 3;
  double fid_shrinkage = 0.0;

  nlohmann::json to_json() const;
  static MetricSettings from_json(const nlohmann::json& j);
};

/// Everything a run needs. Module sections are merged over the desk defaults,
/// so a config file only lists what it changes. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t rvq_epochs = 300;
  std::size_t gen_epochs = 300;
  rvq::RvqConfig rvq;
  skelembed::SkelEmbedConfig skelembed;
  gen::GenConfig generator;
  metrics::EvalEmbedderConfig eval_embedder;
  MetricSettings metrics;

  /// Desk-scale defaults: batch 16, lr 1e-3 for both stages.
  static RunConfig desk_defaults();
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

/// Runs one command line (without the program name). Returns the process exit
/// code: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace topomo::cli
