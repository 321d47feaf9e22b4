// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "topomo/io/checkpoint.hpp"
#include "topomo/numerics/autodiff.hpp"
#include "topomo/numerics/nn.hpp"
#include "topomo/skeleton/skeleton.hpp"

namespace topomo::skelembed {

struct SkelEmbedConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t out_dim = 64;
  std::size_t max_distance_clip = 16;
  std::size_t ffn_dim = 128;

  void validate() const;
  nlohmann::json to_json() const;
  static SkelEmbedConfig from_json(const nlohmann::json& j);
};

/// Per-head additive attention logits over [CLS, joint_0 .. joint_{J-1}],
/// plus the constant column mask (kMaskedLogit toward padded joints).
struct AttentionBias {
  std::vector<ad::Var> heads;  // each (J+1, J+1)
  Tensor mask;                 // (J+1, J+1)
};

/// Everything the embedder reads from a skeleton, padded to `mask.size()` joints.
/// Padded rows of `features` are zero; padded entries of D and R are ignored.
struct SkeletonInput {
  Tensor features;  // (J, kJointFeatureWidth)
  DistanceMatrix distance;
  RelationMatrix relation;
  JointMask mask;
};

/// `j_max` = 0 means no padding.
SkeletonInput make_input(const SkeletonGraph& s, std::size_t j_max = 0);

class SkeletonEmbedder {
 public:
  static SkeletonEmbedder init(const SkelEmbedConfig& config, std::uint64_t seed);

  const SkelEmbedConfig& config() const { return config_; }

  /// (J, 6) -> (J, d): W2 GELU(W1 x + b1) + b2.
  ad::Var embed_joints(const ad::Var& features) const;
  AttentionBias build_bias(const DistanceMatrix& d, const RelationMatrix& r, const JointMask& mask) const;
  /// Pre-norm biased transformer stack over (J+1, d) tokens.
  ad::Var transformer_forward(const ad::Var& z0, const AttentionBias& bias) const;
  /// Full pipeline to a (1, d_s) row.
  ad::Var forward(const SkeletonInput& input) const;
  Tensor embed(const SkeletonGraph& s) const;

  ad::NamedParams parameters(const std::string& prefix = "skel") const;

  // Exposed for tests that pin specific tables or projections.
  ad::Var& distance_table() { return dist_table_; }
  ad::Var& relation_table() { return rel_table_; }
  std::vector<nn::TransformerBlock>& blocks() { return blocks_; }
  nn::Mlp& joint_mlp() { return joint_mlp_; }

  void save(io::Checkpoint& ckpt, const std::string& section = "skelembed") const;
  static SkeletonEmbedder load(const io::Checkpoint& ckpt, const std::string& section = "skelembed");

 private:
  SkelEmbedConfig config_;
  nn::Mlp joint_mlp_;
  ad::Var cls_;         // (1, d)
  ad::Var dist_table_;  // (H, clip + 1)
  ad::Var rel_table_;   // (H, kRelationCount)
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear out_;
};

}  // namespace topomo::skelembed
