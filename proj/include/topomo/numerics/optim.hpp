// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "topomo/numerics/autodiff.hpp"

namespace topomo {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
  double clip_norm = 1.0;     // global gradient-norm clip; <= 0 disables
};

/// AdamW over a fixed parameter list. Aliased parameters (same node listed
/// twice) are updated once.
class Adam {
 public:
  Adam(const ad::NamedParams& params, AdamConfig config);

  void zero_grad();
  /// Applies one update; returns the pre-clip global gradient norm.
  double step();

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  // Moment buffers, in parameter order, for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  const std::vector<ad::Var>& params() const { return params_; }

 private:
  std::vector<ad::Var> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig config_;
  std::uint64_t t_ = 0;
};

}  // namespace topomo
