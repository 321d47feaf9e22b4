// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/numerics/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace topomo::kernels {

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::int64_t kParallelWork = 1 << 15;

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects rank-2 operands, got " + shape_string(t.shape()));
}

void check_mm(const Tensor& a, const Tensor& b, std::size_t ak, std::size_t bk, const char* what) {
  require_rank2(a, what);
  require_rank2(b, what);
  if (ak != bk) {
    throw DimensionError(std::string(what) + ": inner extents disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
}

// Row kernels. Serial and parallel variants call exactly these, which is what
// makes them bitwise interchangeable.

void matmul_row(const Tensor& a, const Tensor& b, double* out, std::size_t i) {
  const std::size_t k = a.cols(), n = b.cols();
  const double* arow = a.data().data() + i * k;
  const double* bdata = b.data().data();
  std::fill(out, out + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = bdata + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

void matmul_nt_row(const Tensor& a, const Tensor& b, double* out, std::size_t i) {
  const std::size_t k = a.cols(), n = b.rows();
  const double* arow = a.data().data() + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b.data().data() + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    out[j] = acc;
  }
}

void matmul_tn_row(const Tensor& a, const Tensor& b, double* out, std::size_t i) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const double* adata = a.data().data();
  const double* bdata = b.data().data();
  std::fill(out, out + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = adata[p * m + i];
    if (av == 0.0) continue;
    const double* brow = bdata + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

// Returns true when the row had no unmasked entry.
bool softmax_row(const double* x, const double* bias, double* out, std::size_t n) {
  double mx = kMaskedLogit;
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (bias && is_masked_logit(bias[j])) continue;
    const double v = bias ? x[j] + bias[j] : x[j];
    if (!any || v > mx) mx = v;
    any = true;
  }
  if (!any) {
    std::fill(out, out + n, 0.0);
    return true;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (bias && is_masked_logit(bias[j])) {
      out[j] = 0.0;
      continue;
    }
    const double v = bias ? x[j] + bias[j] : x[j];
    out[j] = std::exp(v - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  return false;
}

void layer_norm_row(const double* x, const double* gain, const double* offset, double eps, double* out, std::size_t n) {
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) out[j] = (x[j] - mean) * inv * gain[j] + offset[j];
}

template <class RowFn>
void for_rows(std::size_t rows, std::int64_t work, bool parallel, RowFn&& fn) {
  if (parallel) {
    const auto r = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (std::int64_t i = 0; i < r; ++i) fn(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < rows; ++i) fn(i);
  }
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool par) {
  check_mm(a, b, a.rank() == 2 ? a.cols() : 0, b.rank() == 2 ? b.rows() : 1, "matmul");
  Tensor c({a.rows(), b.cols()});
  const auto work = static_cast<std::int64_t>(a.rows() * a.cols() * b.cols());
  double* cd = c.data().data();
  const std::size_t n = b.cols();
  for_rows(a.rows(), work, par, [&](std::size_t i) { matmul_row(a, b, cd + i * n, i); });
  return c;
}

Tensor matmul_nt_impl(const Tensor& a, const Tensor& b, bool par) {
  check_mm(a, b, a.rank() == 2 ? a.cols() : 0, b.rank() == 2 ? b.cols() : 1, "matmul_nt");
  Tensor c({a.rows(), b.rows()});
  const auto work = static_cast<std::int64_t>(a.rows() * a.cols() * b.rows());
  double* cd = c.data().data();
  const std::size_t n = b.rows();
  for_rows(a.rows(), work, par, [&](std::size_t i) { matmul_nt_row(a, b, cd + i * n, i); });
  return c;
}

Tensor matmul_tn_impl(const Tensor& a, const Tensor& b, bool par) {
  check_mm(a, b, a.rank() == 2 ? a.rows() : 0, b.rank() == 2 ? b.rows() : 1, "matmul_tn");
  Tensor c({a.cols(), b.cols()});
  const auto work = static_cast<std::int64_t>(a.rows() * a.cols() * b.cols());
  double* cd = c.data().data();
  const std::size_t n = b.cols();
  for_rows(a.cols(), work, par, [&](std::size_t i) { matmul_tn_row(a, b, cd + i * n, i); });
  return c;
}

SoftmaxResult softmax_impl(const Tensor& x, const Tensor* bias, bool par) {
  require_rank2(x, "softmax_rows");
  if (bias && bias->shape() != x.shape()) {
    throw DimensionError("softmax_rows: bias shape " + shape_string(bias->shape()) + " differs from logits " +
                         shape_string(x.shape()));
  }
  SoftmaxResult res{Tensor(x.shape()), {}};
  const std::size_t n = x.cols();
  std::vector<unsigned char> masked(x.rows(), 0);
  const double* xd = x.data().data();
  const double* bd = bias ? bias->data().data() : nullptr;
  double* od = res.probs.data().data();
  for_rows(x.rows(), static_cast<std::int64_t>(x.size()) * 8, par, [&](std::size_t i) {
    masked[i] = softmax_row(xd + i * n, bd ? bd + i * n : nullptr, od + i * n, n) ? 1 : 0;
  });
  for (auto m : masked) res.status.fully_masked_rows += m;
  return res;
}

Tensor gelu_impl(const Tensor& x, bool par) {
  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  const std::size_t n = x.size();
  for_rows(n, static_cast<std::int64_t>(n) * 8, par, [&](std::size_t i) { yd[i] = gelu_scalar(xd[i]); });
  return y;
}

Tensor layer_norm_impl(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps, bool par) {
  const std::size_t n = x.shape().back();
  if (gain.size() != n || offset.size() != n) {
    throw DimensionError("layer_norm: gain/offset length must equal last extent of " + shape_string(x.shape()));
  }
  Tensor y(x.shape());
  const std::size_t rows = x.size() / n;
  const double* xd = x.data().data();
  double* yd = y.data().data();
  for_rows(rows, static_cast<std::int64_t>(x.size()) * 4, par, [&](std::size_t i) {
    layer_norm_row(xd + i * n, gain.data().data(), offset.data().data(), eps, yd + i * n, n);
  });
  return y;
}

}  // namespace

double gelu_scalar(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

namespace serial {
Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_nt_impl(a, b, false); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_tn_impl(a, b, false); }
SoftmaxResult softmax_rows(const Tensor& x, const Tensor* bias) { return softmax_impl(x, bias, false); }
Tensor gelu(const Tensor& x) { return gelu_impl(x, false); }
Tensor layer_norm(const Tensor& x, const Tensor& g, const Tensor& o, double eps) {
  return layer_norm_impl(x, g, o, eps, false);
}
}  // namespace serial

namespace parallel {
Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_nt_impl(a, b, true); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_tn_impl(a, b, true); }
SoftmaxResult softmax_rows(const Tensor& x, const Tensor* bias) { return softmax_impl(x, bias, true); }
Tensor gelu(const Tensor& x) { return gelu_impl(x, true); }
Tensor layer_norm(const Tensor& x, const Tensor& g, const Tensor& o, double eps) {
  return layer_norm_impl(x, g, o, eps, true);
}
}  // namespace parallel

}  // namespace topomo::kernels
