// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "topomo/io/checkpoint.hpp"
#include "topomo/motion/corpus.hpp"
#include "topomo/numerics/autodiff.hpp"
#include "topomo/numerics/nn.hpp"
#include "topomo/numerics/optim.hpp"
#include "topomo/numerics/random.hpp"
#include "topomo/rvq/rvq.hpp"
#include "topomo/skelembed/skelembed.hpp"

namespace topomo::gen {

// ---- text conditioning ----------------------------------------------------------

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::size_t dim() const = 0;
  /// Deterministic; equal strings give equal vectors.
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// Lowercased alphanumeric tokens hashed (FNV-1a) into buckets, summed through
/// a fixed seeded Gaussian projection and L2-normalized. Empty text maps to zeros.
class HashedBagEmbedder final : public TextEmbedder {
 public:
  explicit HashedBagEmbedder(std::size_t dim = 64, std::uint64_t seed = 0, std::size_t buckets = 1024);
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const std::string& text) const override;

  std::uint64_t seed() const { return seed_; }
  std::size_t buckets() const { return buckets_; }

  static std::vector<std::string> tokenize(const std::string& text);

 private:
  std::size_t dim_, buckets_;
  std::uint64_t seed_;
  Tensor projection_;  // (buckets, dim)
};

// ---- configuration --------------------------------------------------------------

struct GenConfig {
  std::size_t layers = 8;
  std::size_t heads = 4;
  std::size_t model_dim = 128;
  std::size_t ffn_dim = 256;
  std::size_t residual_layers = 8;
  std::size_t text_dim = 64;
  std::size_t cond_dim = 128;
  std::size_t max_tokens = 120;  // n for T = 240
  double cfg_dropout = 0.1;
  double cfg_scale = 3.0;
  std::size_t unmask_iters = 10;
  double lr = 1e-3;
  std::size_t batch_size = 4;
  std::uint64_t text_seed = 0;
  bool use_skeleton_embed = true;  // false: f_skel is replaced by zeros
  bool use_motion_summary = true;  // prompt = "<summary>. <detail>" vs detail only

  void validate() const;
  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

// ---- masking and losses -------------------------------------------------------------

struct MaskedTokens {
  std::vector<std::size_t> tokens;     // with mask_id at masked positions
  std::vector<std::size_t> positions;  // sorted masked positions
};

/// ceil(ratio * n) positions chosen uniformly without replacement.
MaskedTokens mask_tokens(std::span<const std::size_t> tokens, double ratio, std::uint64_t seed, std::size_t mask_id);

/// Cosine schedule: the masking ratio for a uniform draw u in [0, 1).
double cosine_mask_ratio(double u);

struct LossValue {
  ad::Var loss;
  bool empty = false;  // no masked positions: loss is 0
};

/// Mean NLL of `targets` over the masked rows of (n, K) logits.
LossValue masked_loss(const ad::Var& logits, std::span<const std::size_t> targets, std::span<const std::size_t> positions);
/// Mean NLL over all n rows.
ad::Var residual_loss(const ad::Var& logits, std::span<const std::size_t> targets);

/// l_null + scale * (l_cond - l_null); scale 1 returns l_cond unchanged.
Tensor guided_logits(const Tensor& cond, const Tensor& null, double scale);

// ---- model -------------------------------------------------------------------------

/// Token sequences of one corpus entry plus its conditioning inputs.
struct GenItem {
  rvq::TokenSequences tokens;
  std::vector<double> text;                 // f_text
  skelembed::SkeletonInput skeleton;
};

class GenModel {
 public:
  /// `codes` is the per-level codebook size K (mask id = K), `levels` the RVQ depth V+1.
  static GenModel init(const GenConfig& config, const skelembed::SkelEmbedConfig& skel_config, std::size_t codes,
                       std::size_t levels, std::uint64_t seed);

  const GenConfig& config() const { return config_; }
  GenConfig& mutable_config() { return config_; }
  std::size_t codes() const { return codes_; }
  std::size_t levels() const { return levels_; }
  std::size_t mask_id() const { return codes_; }
  const HashedBagEmbedder& text_embedder() const { return text_; }
  const skelembed::SkeletonEmbedder& skeleton_embedder() const { return skel_; }

  /// f_skel as a (1, d_s) row; zeros when the skeleton embedding is disabled.
  ad::Var skeleton_feature(const skelembed::SkeletonInput& s) const;
  /// (1, d_c) condition; `null` swaps the concatenated input for the learned null vector.
  ad::Var fuse_condition(const std::vector<double>& text, const ad::Var& skel, bool null) const;

  /// (n, K) logits over base tokens; `tokens` may contain mask_id.
  ad::Var masked_logits(std::span<const std::size_t> tokens, const ad::Var& cond) const;
  /// (n, K) logits for level j in [1, V] from levels 0..j-1.
  ad::Var residual_logits(const rvq::TokenSequences& tokens, std::size_t level, const ad::Var& cond) const;

  /// Storage of the head predicting `level` and of the input embedding for `level`
  /// (identical for 1 <= level < V).
  ad::Var residual_head(std::size_t level) const;
  ad::Var residual_embedding(std::size_t level) const;

  ad::NamedParams parameters() const;
  void save(io::Checkpoint& ckpt) const;
  static GenModel load(const io::Checkpoint& ckpt);

  GenItem make_item(const rvq::TokenSequences& tokens, const TextRecord& text, const SkeletonGraph& s) const;

 private:
  ad::Var transformer(const std::vector<nn::TransformerBlock>& blocks, const nn::LayerNorm& norm, const ad::Var& x) const;

  GenConfig config_;
  skelembed::SkelEmbedConfig skel_config_;
  std::size_t codes_ = 0, levels_ = 0;
  HashedBagEmbedder text_;
  skelembed::SkeletonEmbedder skel_;
  // condition fusion
  nn::Mlp fuse_;
  ad::Var null_input_;  // (1, d_t + d_s)
  // masked transformer
  ad::Var base_embed_;  // (K + 1, d)
  ad::Var base_pos_;    // (max_tokens + 1, d)
  nn::Linear base_cond_;
  std::vector<nn::TransformerBlock> base_blocks_;
  nn::LayerNorm base_norm_;
  nn::Linear base_head_;
  // residual transformer
  ad::Var res_pos_;         // (max_tokens + 1, d)
  ad::Var res_level_;       // (levels, d)
  nn::Linear res_cond_;
  std::vector<nn::TransformerBlock> res_blocks_;
  nn::LayerNorm res_norm_;
  std::vector<ad::Var> res_tables_;  // one (K, d) table per level: input embedding of level v and head for level v
};

// ---- training ------------------------------------------------------------------------

struct GenEpochStats {
  double masked_loss = 0;
  double residual_loss = 0;
  std::size_t samples = 0;
  std::size_t null_conditions = 0;
};

struct GenTrainOptions {
  std::size_t epochs = 100;
  std::size_t first_epoch = 0;
  std::uint64_t seed = 0;
  bool train_split_only = true;
  std::function<void(std::size_t epoch, const GenEpochStats&)> on_epoch;
};

struct GenTrainResult {
  std::vector<GenEpochStats> history;
};

/// Tokenizes the corpus with `rvq_model` once, then trains the fusion MLP,
/// skeleton embedder and both transformers jointly with Adam.
GenTrainResult train_generator(GenModel& model, const rvq::RvqModel& rvq_model, const Corpus& corpus,
                               const GenTrainOptions& options, Adam* optimizer = nullptr);

struct MaskedEval {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy over masked positions
  std::size_t positions = 0;
};

/// Conditional (non-null) masked-token accuracy and cross-entropy over the
/// given entries, masking `ratio` of each sequence with per-entry seeds.
MaskedEval masked_evaluation(const GenModel& model, const rvq::RvqModel& rvq_model, const Corpus& corpus,
                             std::span<const std::size_t> entries, double ratio, std::uint64_t seed);

/// Fraction of masked base tokens predicted exactly (argmax of the conditional
/// logits) over the given entries, masking `ratio` of each sequence.
double masked_token_accuracy(const GenModel& model, const rvq::RvqModel& rvq_model, const Corpus& corpus,
                             std::span<const std::size_t> entries, double ratio, std::uint64_t seed);

// ---- generation ------------------------------------------------------------------------

inline constexpr std::size_t kMinGenerateFrames = 20;
inline constexpr std::size_t kMaxGenerateFrames = 240;

struct GenerateOptions {
  std::uint64_t seed = 0;
  double cfg_scale = 3.0;
  double temperature = 1.0;
};

struct Generation {
  rvq::TokenSequences tokens;
  MotionSequence motion;  // T frames, un-normalized to the input skeleton's scale
};

/// Base tokens by iterative confidence-ordered unmasking, then residual levels.
rvq::TokenSequences generate_tokens(const GenModel& model, const std::string& text, const SkeletonGraph& normalized,
                                    std::size_t n, const GenerateOptions& options);

Generation generate(const GenModel& model, const rvq::RvqModel& rvq_model, const std::string& text,
                    const SkeletonGraph& skeleton, std::size_t frames, const GenerateOptions& options, double fps = 30.0);

}  // namespace topomo::gen
