// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "topomo/numerics/autodiff.hpp"
#include "topomo/numerics/tensor.hpp"

namespace topomo::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named sections ("rvq", "skelembed", "generator", "train_state", ...), each
/// holding a JSON config and a set of named float64 tensors. Stored in the
/// binary container with magic TPMOCKPT.
class Checkpoint {
 public:
  bool has_section(const std::string& section) const;
  nlohmann::json& config(const std::string& section);
  const nlohmann::json& config(const std::string& section) const;

  void put_tensor(const std::string& section, const std::string& name, const Tensor& t);
  Tensor get_tensor(const std::string& section, const std::string& name) const;
  bool has_tensor(const std::string& section, const std::string& name) const;

  void put_params(const std::string& section, const ad::NamedParams& params);
  /// Copies stored values into `params`; names and shapes must match.
  void load_params(const std::string& section, const ad::NamedParams& params) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  nlohmann::json header_ = {{"sections", nlohmann::json::object()}};
  std::vector<double> payload_;
};

}  // namespace topomo::io
