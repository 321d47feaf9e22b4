// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "topomo/numerics/autodiff.hpp"
#include "topomo/numerics/random.hpp"

// Small layer library shared by the skeleton encoder and the generators.

namespace topomo::nn {

struct Linear {
  ad::Var weight;  // (in, out)
  ad::Var bias;    // (out); empty Var when the layer has no bias

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  static Linear zeros(std::size_t in, std::size_t out, bool with_bias = true);
  ad::Var operator()(const ad::Var& x) const;
  void collect(const std::string& prefix, ad::NamedParams& out) const;
};

struct LayerNorm {
  ad::Var gain;
  ad::Var offset;
  double eps = 1e-5;

  static LayerNorm init(std::size_t width);
  ad::Var operator()(const ad::Var& x) const;
  void collect(const std::string& prefix, ad::NamedParams& out) const;
};

/// Two-layer perceptron: out = W2 GELU(W1 x + b1) + b2.
struct Mlp {
  Linear hidden;
  Linear output;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  ad::Var operator()(const ad::Var& x) const;
  void collect(const std::string& prefix, ad::NamedParams& out) const;
};

/// Pre-norm transformer block:
///   x' = x + MHA(LN(x), bias);  y = x' + FFN(LN(x')).
/// Attention logits are (Q K^T) / sqrt(d/H) plus an optional learned per-head
/// bias and an optional constant mask (kMaskedLogit entries get zero weight).
struct TransformerBlock {
  std::size_t heads = 1;
  LayerNorm ln_attn;
  Linear query, key, value, out;
  LayerNorm ln_ffn;
  Mlp ffn;

  static TransformerBlock init(std::size_t width, std::size_t heads, std::size_t ffn_width, Rng& rng);
  ad::Var forward(const ad::Var& x, std::span<const ad::Var> head_bias = {}, const Tensor* mask = nullptr) const;
  /// Zeroes the attention output and FFN output projections, making the block the identity.
  void zero_output_projections();
  void collect(const std::string& prefix, ad::NamedParams& out) const;
};

/// Scaled dot-product attention for one head; exposed for testing.
ad::Var attention_head(const ad::Var& q, const ad::Var& k, const ad::Var& v, double scale, const ad::Var* bias,
                       const Tensor* mask);

}  // namespace topomo::nn
