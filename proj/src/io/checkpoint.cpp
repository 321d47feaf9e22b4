// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/io/checkpoint.hpp"

#include "topomo/io/container.hpp"

namespace topomo::io {

namespace {

nlohmann::json& section_of(nlohmann::json& header, const std::string& section) {
  auto& s = header["sections"][section];
  if (!s.contains("config")) s["config"] = nlohmann::json::object();
  if (!s.contains("tensors")) s["tensors"] = nlohmann::json::object();
  return s;
}

}  // namespace

bool Checkpoint::has_section(const std::string& section) const { return header_["sections"].contains(section); }

nlohmann::json& Checkpoint::config(const std::string& section) { return section_of(header_, section)["config"]; }

const nlohmann::json& Checkpoint::config(const std::string& section) const {
  if (!has_section(section)) throw FormatError("checkpoint has no '" + section + "' section");
  return header_["sections"][section]["config"];
}

void Checkpoint::put_tensor(const std::string& section, const std::string& name, const Tensor& t) {
  auto& entry = section_of(header_, section)["tensors"][name];
  entry["shape"] = t.shape();
  entry["offset"] = payload_.size();
  payload_.insert(payload_.end(), t.data().begin(), t.data().end());
}

bool Checkpoint::has_tensor(const std::string& section, const std::string& name) const {
  return has_section(section) && header_["sections"][section]["tensors"].contains(name);
}

Tensor Checkpoint::get_tensor(const std::string& section, const std::string& name) const {
  if (!has_tensor(section, name)) throw FormatError("checkpoint section '" + section + "' lacks tensor '" + name + "'");
  const auto& entry = header_["sections"][section]["tensors"][name];
  try {
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (offset + n > payload_.size()) throw FormatError("tensor '" + name + "' runs past the payload");
    return Tensor(shape, std::vector<double>(payload_.begin() + static_cast<std::ptrdiff_t>(offset),
                                             payload_.begin() + static_cast<std::ptrdiff_t>(offset + n)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("tensor '" + name + "': " + e.what());
  }
}

void Checkpoint::put_params(const std::string& section, const ad::NamedParams& params) {
  for (const auto& [name, var] : params) {
    if (has_tensor(section, name)) continue;  // shared storage listed twice
    put_tensor(section, name, var.value());
  }
}

void Checkpoint::load_params(const std::string& section, const ad::NamedParams& params) const {
  for (const auto& [name, var] : params) {
    Tensor t = get_tensor(section, name);
    if (t.shape() != var.value().shape()) {
      throw FormatError("parameter '" + section + "/" + name + "' has shape " + shape_string(t.shape()) +
                        ", model expects " + shape_string(var.value().shape()));
    }
    ad::Var v = var;
    v.mutable_value() = std::move(t);
  }
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json header = header_;
  header["format"] = "topomo-checkpoint";
  write_container(path, kCheckpointMagic, kCheckpointVersion, std::move(header), payload_);
}

Checkpoint Checkpoint::load(const std::string& path) {
  Container box = read_container(path, kCheckpointMagic, kCheckpointVersion);
  Checkpoint c;
  if (!box.header.contains("sections") || !box.header["sections"].is_object()) {
    throw FormatError("checkpoint header lacks sections");
  }
  c.header_ = {{"sections", box.header["sections"]}};
  c.payload_ = std::move(box.payload);
  return c;
}

}  // namespace topomo::io
