// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/skelembed/skelembed.hpp"

#include <algorithm>

#include "topomo/numerics/random.hpp"

namespace topomo::skelembed {

void SkelEmbedConfig::validate() const {
  if (layers < 1 || heads < 1 || model_dim < 1 || out_dim < 1 || ffn_dim < 1) {
    throw UsageError("skelembed: sizes must be >= 1");
  }
  if (model_dim % heads != 0) throw UsageError("skelembed: model_dim must be divisible by heads");
  if (max_distance_clip < 1) throw UsageError("skelembed: max_distance_clip must be >= 1");
}

nlohmann::json SkelEmbedConfig::to_json() const {
  return {{"layers", layers},   {"heads", heads},     {"model_dim", model_dim},
          {"out_dim", out_dim}, {"ffn_dim", ffn_dim}, {"max_distance_clip", max_distance_clip}};
}

SkelEmbedConfig SkelEmbedConfig::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys{"layers", "heads", "model_dim", "out_dim", "ffn_dim", "max_distance_clip"};
  if (!j.is_object()) throw UsageError("skelembed config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) throw UsageError("unknown skelembed config key '" + key + "'");
  }
  SkelEmbedConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.out_dim = j.value("out_dim", c.out_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_distance_clip = j.value("max_distance_clip", c.max_distance_clip);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("skelembed config: ") + e.what());
  }
  c.validate();
  return c;
}

SkeletonInput make_input(const SkeletonGraph& s, std::size_t j_max) {
  const std::size_t k = s.size();
  if (j_max == 0) j_max = k;
  if (j_max < k) throw DimensionError("make_input: j_max is smaller than the joint count");
  SkeletonInput in;
  in.features = pad_joints(joint_features(s), 0, j_max);
  const DistanceMatrix d = distance_matrix(s);
  const RelationMatrix r = relation_matrix(s);
  in.distance = DistanceMatrix(j_max);
  in.relation = RelationMatrix(j_max);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      in.distance(i, j) = d(i, j);
      in.relation(i, j) = r(i, j);
    }
  in.mask = JointMask::valid_prefix(k, j_max);
  return in;
}

SkeletonEmbedder SkeletonEmbedder::init(const SkelEmbedConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(Rng::derive(seed, 0x5e1e));
  const std::size_t d = config.model_dim;
  SkeletonEmbedder e;
  e.config_ = config;
  e.joint_mlp_ = nn::Mlp::init(kJointFeatureWidth, d, d, rng);
  e.cls_ = ad::parameter(randn({1, d}, rng, 0.02));
  // Zero tables: the structural bias starts neutral and is learned.
  e.dist_table_ = ad::parameter(Tensor({config.heads, config.max_distance_clip + 1}));
  e.rel_table_ = ad::parameter(Tensor({config.heads, kRelationCount}));
  for (std::size_t l = 0; l < config.layers; ++l) e.blocks_.push_back(nn::TransformerBlock::init(d, config.heads, config.ffn_dim, rng));
  e.final_norm_ = nn::LayerNorm::init(d);
  e.out_ = nn::Linear::init(d, config.out_dim, rng);
  return e;
}

ad::Var SkeletonEmbedder::embed_joints(const ad::Var& features) const {
  if (features.value().rank() != 2 || features.value().cols() != kJointFeatureWidth) {
    throw DimensionError("embed_joints expects (J, " + std::to_string(kJointFeatureWidth) + ") features, got " +
                         shape_string(features.shape()));
  }
  return joint_mlp_(features);
}

AttentionBias SkeletonEmbedder::build_bias(const DistanceMatrix& d, const RelationMatrix& r, const JointMask& mask) const {
  const std::size_t j = mask.size();
  if (d.size() != j || r.size() != j) throw DimensionError("build_bias: distance, relation and mask sizes differ");
  if (mask.valid_count() == 0) throw DimensionError("build_bias: no valid joint");
  const std::size_t n = j + 1, clip = config_.max_distance_clip;
  const std::size_t dist_cols = clip + 1;
  AttentionBias bias;
  bias.mask = Tensor({n, n});
  for (std::size_t row = 0; row < n; ++row)
    for (std::size_t c = 1; c < n; ++c)
      if (!mask.valid(c - 1)) bias.mask(row, c) = kMaskedLogit;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    std::vector<long> di(n * n, -1), ri(n * n, -1);  // -1: zero bias (CLS row/column, padded pairs)
    for (std::size_t a = 0; a < j; ++a) {
      if (!mask.valid(a)) continue;
      for (std::size_t b = 0; b < j; ++b) {
        if (!mask.valid(b)) continue;
        const std::size_t p = (a + 1) * n + (b + 1);
        di[p] = static_cast<long>(h * dist_cols + std::min<std::size_t>(d(a, b), clip));
        ri[p] = static_cast<long>(h * kRelationCount + static_cast<std::size_t>(r(a, b)));
      }
    }
    bias.heads.push_back(ad::add(ad::gather_elements(dist_table_, di, {n, n}), ad::gather_elements(rel_table_, ri, {n, n})));
  }
  return bias;
}

ad::Var SkeletonEmbedder::transformer_forward(const ad::Var& z0, const AttentionBias& bias) const {
  ad::Var z = z0;
  for (const auto& block : blocks_) z = block.forward(z, bias.heads, &bias.mask);
  return z;
}

ad::Var SkeletonEmbedder::forward(const SkeletonInput& input) const {
  if (input.features.rows() != input.mask.size()) throw DimensionError("skeleton input: features and mask disagree");
  // Padded rows enter as zero features; their outputs are never attended to.
  const ad::Var joints = embed_joints(ad::constant(input.features));
  const std::vector<ad::Var> parts{cls_, joints};
  const ad::Var z0 = ad::concat_rows(parts);
  const ad::Var z = transformer_forward(z0, build_bias(input.distance, input.relation, input.mask));
  return out_(final_norm_(ad::slice_rows(z, 0, 1)));
}

Tensor SkeletonEmbedder::embed(const SkeletonGraph& s) const { return forward(make_input(s)).value(); }

ad::NamedParams SkeletonEmbedder::parameters(const std::string& prefix) const {
  ad::NamedParams p;
  joint_mlp_.collect(prefix + ".joint_mlp", p);
  p.emplace_back(prefix + ".cls", cls_);
  p.emplace_back(prefix + ".dist_table", dist_table_);
  p.emplace_back(prefix + ".rel_table", rel_table_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(prefix + ".block" + std::to_string(l), p);
  final_norm_.collect(prefix + ".final_norm", p);
  out_.collect(prefix + ".out", p);
  return p;
}

void SkeletonEmbedder::save(io::Checkpoint& ckpt, const std::string& section) const {
  ckpt.config(section) = config_.to_json();
  ckpt.put_params(section, parameters());
}

SkeletonEmbedder SkeletonEmbedder::load(const io::Checkpoint& ckpt, const std::string& section) {
  SkeletonEmbedder e = init(SkelEmbedConfig::from_json(ckpt.config(section)), 0);
  ckpt.load_params(section, e.parameters());
  return e;
}

}  // namespace topomo::skelembed
