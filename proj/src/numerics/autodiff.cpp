// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "topomo/numerics/kernels.hpp"

namespace topomo::ad {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(const Tensor& g) {
  Tensor& buf = grad_buffer();
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (!node_->grad.empty()) return node_->grad;
  return Tensor(node_->value.shape());
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var parameter(Tensor value) { return Var(std::move(value), true); }
Var constant(Tensor value) { return Var(std::move(value), false); }

void backward(const Var& root) {
  if (root.size() != 1) throw DimensionError("backward: root must be a scalar, got " + shape_string(root.shape()));
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Release interior gradients; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_fn) n->grad = Tensor();
  }
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Var(node);
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " differ");
  }
}

template <class F>
Var unary(const Var& a, F&& f, std::function<void(Node&)> bw) {
  Tensor out(a.shape());
  auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return make(std::move(out), {a}, std::move(bw));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return make(kernels::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(kernels::matmul_nt(n.grad, pb.value));
    if (pb.requires_grad) pb.accumulate(kernels::matmul_tn(pa.value, n.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return make(kernels::matmul_nt(a.value(), b.value()), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(kernels::matmul(n.grad, pb.value));
    if (pb.requires_grad) pb.accumulate(kernels::matmul_tn(n.grad, pa.value));
  });
}

Var transpose(const Var& a) {
  const Tensor& v = a.value();
  const std::size_t r = v.rows(), c = v.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = v(i, j);
  return make(std::move(out), {a}, [r, c](Node& n) {
    Tensor g({r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g(i, j) = n.grad(j, i);
    parent(n, 0).accumulate(g);
  });
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tensor out = a.value();
  auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < 2; ++i)
      if (parent(n, i).requires_grad) parent(n, i).accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tensor out = a.value();
  auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) {
      Tensor g = n.grad;
      for (auto& x : g.data()) x = -x;
      parent(n, 1).accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor out = a.value();
  auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      Tensor g = n.grad;
      auto bv = pb.value.data();
      auto gd = g.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= bv[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g = n.grad;
      auto av = pa.value.data();
      auto gd = g.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= av[i];
      pb.accumulate(g);
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](Node& n) {
    Tensor g = n.grad;
    for (auto& x : g.data()) x *= s;
    parent(n, 0).accumulate(g);
  });
}

Var add_row(const Var& a, const Var& bias) {
  const std::size_t m = a.value().rows(), cols = a.value().cols();
  if (bias.size() != cols) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " does not match " + shape_string(a.shape()));
  }
  Tensor out = a.value();
  auto bd = bias.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < cols; ++j) r[j] += bd[j];
  }
  return make(std::move(out), {a, bias}, [m, cols](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    Node& pb = parent(n, 1);
    if (pb.requires_grad) {
      Tensor g(pb.value.shape());
      auto gd = g.data();
      for (std::size_t i = 0; i < m; ++i) {
        auto r = std::as_const(n.grad).row(i);
        for (std::size_t j = 0; j < cols; ++j) gd[j] += r[j];
      }
      pb.accumulate(g);
    }
  });
}

Var mul_const(const Var& a, const Tensor& c) {
  if (a.shape() != c.shape()) throw DimensionError("mul_const: shape mismatch " + shape_string(a.shape()));
  Tensor out = a.value();
  auto cd = c.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= cd[i];
  return make(std::move(out), {a}, [c](Node& n) {
    Tensor g = n.grad;
    auto cd2 = c.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= cd2[i];
    parent(n, 0).accumulate(g);
  });
}

Var gelu(const Var& a) {
  return make(kernels::gelu(a.value()), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    Tensor g = n.grad;
    auto gd = g.data();
    auto xv = p.value.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= kernels::gelu_derivative(xv[i]);
    p.accumulate(g);
  });
}

Var abs(const Var& a) {
  return unary(a, [](double x) { return std::fabs(x); }, [](Node& n) {
    Node& p = parent(n, 0);
    Tensor g = n.grad;
    auto gd = g.data();
    auto xv = p.value.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= (xv[i] > 0.0) - (xv[i] < 0.0);
    p.accumulate(g);
  });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](Node& n) {
    Node& p = parent(n, 0);
    Tensor g = n.grad;
    auto gd = g.data();
    auto xv = p.value.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= 2.0 * xv[i];
    p.accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& offset, double eps) {
  const std::size_t width = x.shape().back();
  Tensor out = kernels::layer_norm(x.value(), gain.value(), offset.value(), eps);
  return make(std::move(out), {x, gain, offset}, [width, eps](Node& n) {
    Node& px = parent(n, 0);
    Node& pg = parent(n, 1);
    Node& po = parent(n, 2);
    const std::size_t rows = px.value.size() / width;
    const double* xv = px.value.data().data();
    const double* gv = pg.value.data().data();
    const double* gy = n.grad.data().data();
    Tensor dx(px.value.shape());
    Tensor dg(pg.value.shape());
    Tensor doff(po.value.shape());
    std::vector<double> xhat(width), dxhat(width);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xv + r * width;
      const double* gr = gy + r * width;
      double mean = 0.0;
      for (std::size_t j = 0; j < width; ++j) mean += xr[j];
      mean /= static_cast<double>(width);
      double var = 0.0;
      for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<double>(width);
      const double inv = 1.0 / std::sqrt(var + eps);
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        xhat[j] = (xr[j] - mean) * inv;
        dxhat[j] = gr[j] * gv[j];
        dg[j] += gr[j] * xhat[j];
        doff[j] += gr[j];
        s1 += dxhat[j];
        s2 += dxhat[j] * xhat[j];
      }
      const double nw = static_cast<double>(width);
      double* dxr = dx.data().data() + r * width;
      for (std::size_t j = 0; j < width; ++j) dxr[j] = inv / nw * (nw * dxhat[j] - s1 - xhat[j] * s2);
    }
    if (px.requires_grad) px.accumulate(dx);
    if (pg.requires_grad) pg.accumulate(dg);
    if (po.requires_grad) po.accumulate(doff);
  });
}

Var softmax_rows(const Var& logits, const Tensor* mask_bias) {
  auto res = kernels::softmax_rows(logits.value(), mask_bias);
  return make(res.probs, {logits}, [probs = res.probs](Node& n) {
    const std::size_t rows = probs.rows(), cols = probs.cols();
    Tensor g(probs.shape());
    for (std::size_t i = 0; i < rows; ++i) {
      auto p = probs.row(i);
      auto gy = std::as_const(n.grad).row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += p[j] * gy[j];
      auto gr = g.row(i);
      for (std::size_t j = 0; j < cols; ++j) gr[j] = p[j] * (gy[j] - dot);
    }
    parent(n, 0).accumulate(g);
  });
}

Var normalize_rows(const Var& x, double eps) {
  const Tensor& v = x.value();
  if (v.rank() != 2) throw DimensionError("normalize_rows: expected a matrix, got " + shape_string(v.shape()));
  const std::size_t rows = v.rows(), cols = v.cols();
  Tensor out(v.shape());
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = v.row(i);
    double ss = 0.0;
    for (double a : r) ss += a * a;
    norms[i] = std::max(std::sqrt(ss), eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < cols; ++j) o[j] = r[j] / norms[i];
  }
  return make(out, {x}, [out, norms](Node& n) {
    Tensor g(out.shape());
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto y = out.row(i);
      auto gy = std::as_const(n.grad).row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) dot += y[j] * gy[j];
      auto gr = g.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) gr[j] = (gy[j] - y[j] * dot) / norms[i];
    }
    parent(n, 0).accumulate(g);
  });
}

Var reshape(const Var& a, Shape shape) {
  Shape original = a.shape();
  return make(a.value().reshaped(std::move(shape)), {a},
              [original](Node& n) { parent(n, 0).accumulate(n.grad.reshaped(original)); });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make(Tensor({1}, {s}), {a}, [](Node& n) {
    Tensor g(parent(n, 0).value.shape(), n.grad[0]);
    parent(n, 0).accumulate(g);
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  const Tensor& t = table.value();
  const std::size_t cols = t.cols(), vocab = t.rows();
  Tensor out({indices.size(), cols});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= vocab) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[r]) + " out of range for table with " +
                           std::to_string(vocab) + " rows");
    }
    std::copy_n(t.row(indices[r]).begin(), cols, out.row(r).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make(std::move(out), {table}, [idx = std::move(idx), cols](Node& n) {
    Tensor& g = parent(n, 0).grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = std::as_const(n.grad).row(r);
      auto dst = g.row(idx[r]);
      for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
}

Var gather_elements(const Var& table, std::span<const long> indices, Shape out_shape) {
  Tensor out(std::move(out_shape));
  if (out.size() != indices.size()) throw DimensionError("gather_elements: index count does not match output shape");
  const auto tv = table.value().data();
  for (std::size_t p = 0; p < indices.size(); ++p) {
    if (indices[p] >= static_cast<long>(tv.size())) throw DimensionError("gather_elements: index out of range");
    out[p] = indices[p] < 0 ? 0.0 : tv[static_cast<std::size_t>(indices[p])];
  }
  std::vector<long> idx(indices.begin(), indices.end());
  return make(std::move(out), {table}, [idx = std::move(idx)](Node& n) {
    Tensor& g = parent(n, 0).grad_buffer();
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (idx[p] >= 0) g[static_cast<std::size_t>(idx[p])] += n.grad[p];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column counts differ");
    offsets.push_back(rows);
    rows += p.value().rows();
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[k] * cols));
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(std::move(out), inputs, [offsets, cols](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = *n.parents[k];
      if (!p.requires_grad) continue;
      Tensor g(p.value.shape());
      auto src = n.grad.data().subspan(offsets[k] * cols, g.size());
      std::copy(src.begin(), src.end(), g.data().begin());
      p.accumulate(g);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts differ");
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(v.row(i).begin(), v.cols(), out.row(i).begin() + offsets[k]);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(std::move(out), inputs, [offsets, rows](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = *n.parents[k];
      if (!p.requires_grad) continue;
      Tensor g(p.value.shape());
      const std::size_t w = g.cols();
      for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(std::as_const(n.grad).row(i).begin() + offsets[k], w, g.row(i).begin());
      p.accumulate(g);
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (begin >= end || end > v.rows()) throw DimensionError("slice_rows: bad range for " + shape_string(v.shape()));
  const std::size_t cols = v.cols();
  Tensor out({end - begin, cols});
  std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(begin * cols), out.size(), out.data().begin());
  return make(std::move(out), {a}, [begin, cols](Node& n) {
    Tensor& g = parent(n, 0).grad_buffer();
    auto src = n.grad.data();
    auto dst = g.data().subspan(begin * cols, src.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (begin >= end || end > v.cols()) throw DimensionError("slice_cols: bad range for " + shape_string(v.shape()));
  const std::size_t rows = v.rows(), w = end - begin;
  Tensor out({rows, w});
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(v.row(i).begin() + begin, w, out.row(i).begin());
  return make(std::move(out), {a}, [begin, rows, w](Node& n) {
    Tensor& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) {
      auto src = std::as_const(n.grad).row(i);
      auto dst = g.row(i).subspan(begin, w);
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

Var nll_rows(const Var& logits, std::span<const std::size_t> targets, std::span<const std::size_t> rows) {
  const Tensor& lv = logits.value();
  const std::size_t k = lv.cols();
  if (targets.size() != lv.rows()) throw DimensionError("nll_rows: need one target per logits row");
  if (rows.empty()) return constant(Tensor({1}, 0.0));
  Tensor probs({rows.size(), k});
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    if (i >= lv.rows() || targets[i] >= k) throw DimensionError("nll_rows: row or target out of range");
    auto lr = lv.row(i);
    const double mx = *std::max_element(lr.begin(), lr.end());
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(lr[j] - mx);
    const double lse = mx + std::log(s);
    total += lse - lr[targets[i]];
    auto pr = probs.row(r);
    for (std::size_t j = 0; j < k; ++j) pr[j] = std::exp(lr[j] - lse);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<std::size_t> rs(rows.begin(), rows.end());
  std::vector<std::size_t> ts(targets.begin(), targets.end());
  return make(Tensor({1}, total * inv), {logits},
              [probs = std::move(probs), rs = std::move(rs), ts = std::move(ts), inv, k](Node& n) {
                Tensor& g = parent(n, 0).grad_buffer();
                const double s = n.grad[0] * inv;
                for (std::size_t r = 0; r < rs.size(); ++r) {
                  auto dst = g.row(rs[r]);
                  auto pr = probs.row(r);
                  for (std::size_t j = 0; j < k; ++j) dst[j] += s * pr[j];
                  dst[ts[rs[r]]] -= s;
                }
              });
}

namespace {

std::size_t conv_out_len(std::size_t len, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (len + 2 * pad < kernel) throw DimensionError("im2col: sequence shorter than kernel");
  return (len + 2 * pad - kernel) / stride + 1;
}

// Shared index map: (out position t, tap q) -> input position or -1.
long tap_index(std::size_t t, std::size_t q, std::size_t stride, std::size_t pad, std::size_t len) {
  const long pos = static_cast<long>(t * stride + q) - static_cast<long>(pad);
  return (pos < 0 || pos >= static_cast<long>(len)) ? -1 : pos;
}

Tensor unfold(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t out_len) {
  const std::size_t len = x.rows(), c = x.cols();
  Tensor out({out_len, kernel * c});
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t q = 0; q < kernel; ++q) {
      const long pos = tap_index(t, q, stride, pad, len);
      if (pos < 0) continue;
      std::copy_n(x.row(static_cast<std::size_t>(pos)).begin(), c, out.row(t).begin() + q * c);
    }
  }
  return out;
}

Tensor fold(const Tensor& cols, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t len) {
  const std::size_t c = cols.cols() / kernel;
  Tensor out({len, c});
  for (std::size_t t = 0; t < cols.rows(); ++t) {
    for (std::size_t q = 0; q < kernel; ++q) {
      const long pos = tap_index(t, q, stride, pad, len);
      if (pos < 0) continue;
      auto src = cols.row(t).subspan(q * c, c);
      auto dst = out.row(static_cast<std::size_t>(pos));
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  }
  return out;
}

}  // namespace

Var im2col(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const std::size_t len = x.value().rows();
  const std::size_t out_len = conv_out_len(len, kernel, stride, pad);
  return make(unfold(x.value(), kernel, stride, pad, out_len), {x}, [kernel, stride, pad, len](Node& n) {
    parent(n, 0).accumulate(fold(n.grad, kernel, stride, pad, len));
  });
}

Var col2im(const Var& cols, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t out_len) {
  if (cols.value().cols() % kernel != 0) throw DimensionError("col2im: width not divisible by kernel");
  if (conv_out_len(out_len, kernel, stride, pad) != cols.value().rows()) {
    throw DimensionError("col2im: output length inconsistent with patch count");
  }
  return make(fold(cols.value(), kernel, stride, pad, out_len), {cols},
              [kernel, stride, pad](Node& n) {
                Node& p = parent(n, 0);
                p.accumulate(unfold(n.grad, kernel, stride, pad, p.value.rows()));
              });
}

Var masked_joint_mean(const Var& x, std::span<const double> joint_weights, std::size_t frames) {
  const std::size_t joints = joint_weights.size();
  const Tensor& v = x.value();
  if (v.rows() != frames * joints) throw DimensionError("masked_joint_mean: expected frames*joints rows");
  const std::size_t c = v.cols();
  std::vector<std::size_t> valid;
  for (std::size_t j = 0; j < joints; ++j)
    if (joint_weights[j] != 0.0) valid.push_back(j);
  if (valid.empty()) throw DimensionError("masked_joint_mean: mask has no valid joint");
  const double inv = 1.0 / static_cast<double>(valid.size());
  Tensor out({frames, c});
  for (std::size_t t = 0; t < frames; ++t) {
    auto dst = out.row(t);
    for (std::size_t j : valid) {
      auto src = v.row(t * joints + j);
      for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
    }
    for (auto& d : dst) d *= inv;
  }
  return make(std::move(out), {x}, [valid = std::move(valid), joints, frames, c, inv](Node& n) {
    Tensor& g = parent(n, 0).grad_buffer();
    for (std::size_t t = 0; t < frames; ++t) {
      auto src = std::as_const(n.grad).row(t);
      for (std::size_t j : valid) {
        auto dst = g.row(t * joints + j);
        for (std::size_t k = 0; k < c; ++k) dst[k] += src[k] * inv;
      }
    }
  });
}

Var straight_through(const Var& source, Tensor value) {
  if (value.shape() != source.shape()) throw DimensionError("straight_through: shape mismatch");
  return make(std::move(value), {source}, [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Var stop_gradient(const Var& a) { return constant(a.value()); }

}  // namespace topomo::ad
