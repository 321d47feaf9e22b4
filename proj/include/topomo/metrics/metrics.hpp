// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topomo/generator/generator.hpp"
#include "topomo/io/checkpoint.hpp"
#include "topomo/motion/corpus.hpp"
#include "topomo/numerics/nn.hpp"

namespace topomo::metrics {

/// One row per item.
using Features = Eigen::MatrixXd;

// ---- metric functions ----------------------------------------------------------------

struct FidOptions {
  /// Added to both covariance diagonals; 0 disables and enables the rank guard.
  double shrinkage = 0.0;
};

/// Frechet distance between Gaussians fitted to the two row sets (sample
/// covariance, N-1). Throws NumericalError on rank-deficient covariance when
/// shrinkage is 0, or when the symmetrized product has an eigenvalue below -1e-8.
double fid(const Features& real, const Features& gen, const FidOptions& options = {});

/// Mean Euclidean distance over `pairs` seeded random pairs of distinct items.
double diversity(const Features& feats, std::size_t pairs, std::uint64_t seed);

/// Mean distance between aligned rows.
double matching_score(const Features& text, const Features& motion);

/// For each query text, ranks its own motion against pool_size - 1 seeded
/// distractors by Euclidean distance; distractors tied with the true motion
/// rank ahead of it. Returns R@k for each requested k.
std::map<std::size_t, double> r_precision(const Features& text, const Features& motion,
                                          std::span<const std::size_t> ks, std::size_t pool_size,
                                          std::uint64_t seed);

/// `embed_generation(prompt, seed)` generates and embeds one motion. For each
/// prompt, `reps` seeds are drawn; the mean pairwise distance among the reps is
/// averaged over prompts.
double multimodality(const std::function<Eigen::VectorXd(std::size_t prompt, std::uint64_t seed)>& embed_generation,
                     std::size_t prompts, std::size_t reps, std::uint64_t seed);

// ---- report ---------------------------------------------------------------------------

struct MetricReport {
  double fid = 0.0;
  double diversity = 0.0;
  double matching_score = 0.0;
  double multimodality = 0.0;
  std::map<std::size_t, double> r_at;
  nlohmann::json config = nlohmann::json::object();  // pool size, seeds, counts

  /// fid >= 0, R@k in [0, 1] and nondecreasing in k.
  void validate() const;
  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

// ---- evaluation embedder -------------------------------------------------------------------

/// Fixed-length, skeleton-agnostic description of a motion: root trajectory,
/// heading change, joint speed statistics, spatial extent, rotation variability.
std::vector<double> motion_descriptor(const MotionSequence& m);
inline constexpr std::size_t kDescriptorDim = 30;

/// Text used for evaluation prompts and the text encoder.
std::string eval_prompt(const TextRecord& t);

struct EvalEmbedderConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  std::size_t text_dim = 64;
  double temperature = 0.1;
  double lr = 1e-3;
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  std::uint64_t text_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EvalEmbedderConfig from_json(const nlohmann::json& j);
};

struct EvalTrainReport {
  std::vector<double> loss;    // per epoch
  double validation_r1 = 0.0;  // on the test split, pool min(32, n_test)
  std::size_t validation_pool = 0;
  std::string warning;         // set when the corpus has a single motion class
};

/// Text and motion encoders trained with a symmetric InfoNCE objective on the
/// train split. Outputs are unit-norm.
class EvalEmbedder {
 public:
  static EvalEmbedder train(const Corpus& corpus, const EvalEmbedderConfig& config, std::uint64_t seed,
                            EvalTrainReport* report = nullptr);

  Eigen::VectorXd embed_motion(const MotionSequence& m) const;
  Eigen::VectorXd embed_text(const std::string& text) const;
  Features embed_motions(std::span<const MotionSequence* const> motions) const;
  Features embed_texts(std::span<const std::string> texts) const;

  const EvalEmbedderConfig& config() const noexcept { return config_; }
  ad::NamedParams parameters() const;

  void save(io::Checkpoint& ckpt, const std::string& section = "eval_embedder") const;
  static EvalEmbedder load(const io::Checkpoint& ckpt, const std::string& section = "eval_embedder");

 private:
  static EvalEmbedder init(const EvalEmbedderConfig& config, std::uint64_t seed);
  ad::Var motion_forward(const Tensor& descriptors) const;
  ad::Var text_forward(const Tensor& texts) const;
  Tensor standardize(const std::vector<std::vector<double>>& rows) const;

  EvalEmbedderConfig config_;
  gen::HashedBagEmbedder text_;
  Tensor desc_mean_, desc_std_;
  nn::Mlp motion_mlp_, text_mlp_;
};

}  // namespace topomo::metrics
