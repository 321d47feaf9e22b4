// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "topomo/numerics/tensor.hpp"

// Dense kernels used by the autodiff layer. Two implementations share one
// contract: `serial` is the plain reference, `parallel` splits output rows
// across OpenMP threads. Every output element is reduced in the same order in
// both, so results are bitwise identical regardless of thread count.

namespace topomo::kernels {

struct SoftmaxStatus {
  std::size_t fully_masked_rows = 0;
  bool ok() const noexcept { return fully_masked_rows == 0; }
};

struct SoftmaxResult {
  Tensor probs;
  SoftmaxStatus status;
};

double gelu_scalar(double x) noexcept;
double gelu_derivative(double x) noexcept;

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b);     // a b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T b
SoftmaxResult softmax_rows(const Tensor& x, const Tensor* additive_bias = nullptr);
Tensor gelu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps);

}  // namespace serial

namespace parallel {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);
SoftmaxResult softmax_rows(const Tensor& x, const Tensor* additive_bias = nullptr);
Tensor gelu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps);

}  // namespace parallel

using parallel::gelu;
using parallel::layer_norm;
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;
using parallel::softmax_rows;

}  // namespace topomo::kernels
