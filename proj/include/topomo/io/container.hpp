// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace topomo::io {

// Binary container shared by corpus and checkpoint files:
//
//   magic       8 bytes ("TPMOCORP", "TPMOCKPT", ...)
//   version     u32 little-endian
//   header_len  u64
//   payload_len u64   (number of float64 values)
//   header      JSON text, header_len bytes
//   payload     payload_len float64 values, little-endian
//   crc32       u32 over header bytes followed by payload bytes
//
// The header additionally records "payload_crc32" so a payload swapped
// between files is caught even if the trailer is rewritten.

inline constexpr std::string_view kCorpusMagic = "TPMOCORP";
inline constexpr std::string_view kCheckpointMagic = "TPMOCKPT";

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

std::vector<std::uint8_t> encode_container(std::string_view magic, std::uint32_t version, nlohmann::json header,
                                           std::span<const double> payload);
Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic, std::uint32_t version);

void write_container(const std::string& path, std::string_view magic, std::uint32_t version, nlohmann::json header,
                     std::span<const double> payload);
/// Throws FormatError on bad magic, version mismatch, truncation, or checksum failure.
Container read_container(const std::string& path, std::string_view magic, std::uint32_t version);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace topomo::io
