// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "topomo/numerics/autodiff.hpp"

namespace topomo {

struct GradEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
};

struct GradReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool passed = false;
  std::vector<GradEntry> per_parameter;

  /// Human-readable worst offenders, for test failure messages.
  std::string summary(std::size_t worst = 5) const;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Elements checked per tensor; tensors at or below this size are checked fully.
  std::size_t sample_size = 32;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences. `loss_fn` must rebuild its graph from the current values of
/// `params` on every call. Passes iff max relative error < tol, with relative
/// error |a-n| / max(|a|, |n|, 1e-8).
GradReport grad_check(const std::function<ad::Var()>& loss_fn, const ad::NamedParams& params,
                      const GradCheckOptions& options = {});

}  // namespace topomo
