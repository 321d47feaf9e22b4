// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "topomo/numerics/tensor.hpp"

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a node in a dynamically built graph. Leaves created by
// `parameter` accumulate gradients across `backward` calls until `zero_grad`.
// Intermediate nodes are freed once the last Var referring to them goes away.

namespace topomo::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient accumulated so far; zeros when nothing has flowed in.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_storage(const Var& other) const { return node_ == other.node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

using NamedParams = std::vector<std::pair<std::string, Var>>;

Var parameter(Tensor value);
Var constant(Tensor value);

/// Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
void backward(const Var& root);

// ---- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a b^T
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a length-n vector (shape (n) or (1,n)) to every row of an (m,n) matrix.
Var add_row(const Var& a, const Var& bias);
/// Elementwise product with a constant of the same shape.
Var mul_const(const Var& a, const Tensor& c);
Var gelu(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& offset, double eps = 1e-5);
/// Row softmax; entries whose `mask_bias` value is kMaskedLogit get exactly zero mass.
Var softmax_rows(const Var& logits, const Tensor* mask_bias = nullptr);
/// Scales each row to unit L2 norm (norms below eps are treated as eps).
Var normalize_rows(const Var& x, double eps = 1e-12);
Var reshape(const Var& a, Shape shape);
Var sum(const Var& a);
Var mean(const Var& a);

/// out[r] = table[indices[r]] for a rank-2 table.
Var gather_rows(const Var& table, std::span<const std::size_t> indices);
/// out.flat[p] = table.flat[indices[p]]; a negative index yields a constant 0.
Var gather_elements(const Var& table, std::span<const long> indices, Shape out_shape);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);

/// Mean negative log-likelihood of `targets` at the listed rows of `logits`.
Var nll_rows(const Var& logits, std::span<const std::size_t> targets, std::span<const std::size_t> rows);

/// Unfolds a (T, C) sequence into (T_out, k*C) patches, zero padded.
Var im2col(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad);
/// Adjoint of im2col: scatters (T_in, k*C) patches into an (out_len, C) sequence.
Var col2im(const Var& cols, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t out_len);

/// x is (T*J, C) laid out frame-major; returns the (T, C) mean over joints with
/// weight 1. Joints with weight 0 are skipped entirely.
Var masked_joint_mean(const Var& x, std::span<const double> joint_weights, std::size_t frames);

/// Forward value is `value`; the gradient passes to `source` unchanged.
Var straight_through(const Var& source, Tensor value);
Var stop_gradient(const Var& a);

}  // namespace topomo::ad
