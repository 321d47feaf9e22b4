// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/numerics/nn.hpp"

#include <cmath>
#include <vector>

namespace topomo::nn {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = ad::parameter(glorot(in, out, rng));
  if (with_bias) l.bias = ad::parameter(Tensor({out}));
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = ad::parameter(Tensor({in, out}));
  if (with_bias) l.bias = ad::parameter(Tensor({out}));
  return l;
}

ad::Var Linear::operator()(const ad::Var& x) const {
  ad::Var y = ad::matmul(x, weight);
  return bias ? ad::add_row(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ad::NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias) out.emplace_back(prefix + ".bias", bias);
}

LayerNorm LayerNorm::init(std::size_t width) {
  return LayerNorm{ad::parameter(Tensor({width}, 1.0)), ad::parameter(Tensor({width})), 1e-5};
}

ad::Var LayerNorm::operator()(const ad::Var& x) const { return ad::layer_norm(x, gain, offset, eps); }

void LayerNorm::collect(const std::string& prefix, ad::NamedParams& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".offset", offset);
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return Mlp{Linear::init(in, hidden, rng), Linear::init(hidden, out, rng)};
}

ad::Var Mlp::operator()(const ad::Var& x) const { return output(ad::gelu(hidden(x))); }

void Mlp::collect(const std::string& prefix, ad::NamedParams& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

ad::Var attention_head(const ad::Var& q, const ad::Var& k, const ad::Var& v, double scale, const ad::Var* bias,
                       const Tensor* mask) {
  ad::Var logits = ad::scale(ad::matmul_nt(q, k), scale);
  if (bias) logits = ad::add(logits, *bias);
  return ad::matmul(ad::softmax_rows(logits, mask), v);
}

TransformerBlock TransformerBlock::init(std::size_t width, std::size_t heads, std::size_t ffn_width, Rng& rng) {
  if (heads == 0 || width % heads != 0) throw UsageError("transformer width must be divisible by head count");
  TransformerBlock b;
  b.heads = heads;
  b.ln_attn = LayerNorm::init(width);
  b.query = Linear::init(width, width, rng, false);
  b.key = Linear::init(width, width, rng, false);
  b.value = Linear::init(width, width, rng, false);
  b.out = Linear::init(width, width, rng);
  b.ln_ffn = LayerNorm::init(width);
  b.ffn = Mlp::init(width, ffn_width, width, rng);
  return b;
}

ad::Var TransformerBlock::forward(const ad::Var& x, std::span<const ad::Var> head_bias, const Tensor* mask) const {
  const std::size_t width = x.shape().back();
  const std::size_t head_dim = width / heads;
  if (!head_bias.empty() && head_bias.size() != heads) throw DimensionError("one attention bias per head expected");
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const ad::Var h = ln_attn(x);
  const ad::Var q = query(h), k = key(h), v = value(h);
  std::vector<ad::Var> per_head;
  per_head.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const std::size_t lo = i * head_dim, hi = lo + head_dim;
    const ad::Var* bias = head_bias.empty() ? nullptr : &head_bias[i];
    per_head.push_back(attention_head(heads == 1 ? q : ad::slice_cols(q, lo, hi), heads == 1 ? k : ad::slice_cols(k, lo, hi),
                                      heads == 1 ? v : ad::slice_cols(v, lo, hi), scale, bias, mask));
  }
  const ad::Var attn = heads == 1 ? per_head[0] : ad::concat_cols(per_head);
  const ad::Var mid = ad::add(x, out(attn));
  return ad::add(mid, ffn(ln_ffn(mid)));
}

void TransformerBlock::zero_output_projections() {
  for (auto& w : out.weight.mutable_value().data()) w = 0.0;
  for (auto& w : out.bias.mutable_value().data()) w = 0.0;
  for (auto& w : ffn.output.weight.mutable_value().data()) w = 0.0;
  for (auto& w : ffn.output.bias.mutable_value().data()) w = 0.0;
}

void TransformerBlock::collect(const std::string& prefix, ad::NamedParams& out_params) const {
  ln_attn.collect(prefix + ".ln_attn", out_params);
  query.collect(prefix + ".query", out_params);
  key.collect(prefix + ".key", out_params);
  value.collect(prefix + ".value", out_params);
  out.collect(prefix + ".out", out_params);
  ln_ffn.collect(prefix + ".ln_ffn", out_params);
  ffn.collect(prefix + ".ffn", out_params);
}

}  // namespace topomo::nn
