// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/io/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "topomo/numerics/error.hpp"

namespace topomo::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr std::size_t kMagicLen = 8;
constexpr std::size_t kPreambleLen = kMagicLen + 4 + 8 + 8;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t at) {
  T v;
  std::memcpy(&v, bytes.data() + at, sizeof(T));
  return v;
}

std::span<const std::uint8_t> as_bytes(std::span<const double> d) {
  return {reinterpret_cast<const std::uint8_t*>(d.data()), d.size() * sizeof(double)};
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
  uLong crc = seed;
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_container(std::string_view magic, std::uint32_t version, nlohmann::json header,
                                           std::span<const double> payload) {
  if (magic.size() != kMagicLen) throw UsageError("container magic must be 8 bytes");
  header["payload_crc32"] = crc32_of(as_bytes(payload));
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(kPreambleLen + text.size() + payload.size() * sizeof(double) + 4);
  out.insert(out.end(), magic.begin(), magic.end());
  put<std::uint32_t>(out, version);
  put<std::uint64_t>(out, text.size());
  put<std::uint64_t>(out, payload.size());
  const std::size_t body_start = out.size();
  out.insert(out.end(), text.begin(), text.end());
  const auto pb = as_bytes(payload);
  out.insert(out.end(), pb.begin(), pb.end());
  put<std::uint32_t>(out, crc32_of(std::span(out).subspan(body_start)));
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic, std::uint32_t version) {
  if (bytes.size() < kPreambleLen) throw FormatError("file is truncated (no container preamble)");
  if (std::memcmp(bytes.data(), magic.data(), kMagicLen) != 0) {
    throw FormatError("bad magic bytes: expected '" + std::string(magic) + "'");
  }
  const auto file_version = get<std::uint32_t>(bytes, kMagicLen);
  if (file_version != version) {
    throw FormatError("unsupported container version " + std::to_string(file_version) + " (expected " +
                      std::to_string(version) + ")");
  }
  const auto header_len = get<std::uint64_t>(bytes, kMagicLen + 4);
  const auto payload_len = get<std::uint64_t>(bytes, kMagicLen + 12);
  const std::uint64_t remaining = bytes.size() - kPreambleLen;
  if (header_len > remaining || payload_len > (remaining - header_len) / sizeof(double) ||
      kPreambleLen + header_len + payload_len * sizeof(double) + 4 != bytes.size()) {
    throw FormatError("file is truncated or has trailing bytes");
  }
  const auto body = bytes.subspan(kPreambleLen, header_len + payload_len * sizeof(double));
  const auto trailer = get<std::uint32_t>(bytes, bytes.size() - 4);
  if (crc32_of(body) != trailer) throw FormatError("checksum mismatch: file is corrupted");

  Container c;
  try {
    c.header = nlohmann::json::parse(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container header is not valid JSON: ") + e.what());
  }
  c.payload.resize(payload_len);
  std::memcpy(c.payload.data(), body.data() + header_len, payload_len * sizeof(double));
  if (!c.header.contains("payload_crc32") || c.header["payload_crc32"].get<std::uint32_t>() != crc32_of(as_bytes(c.payload))) {
    throw FormatError("payload checksum recorded in header does not match");
  }
  return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move '" + tmp + "' into place: " + ec.message());
}

void write_container(const std::string& path, std::string_view magic, std::uint32_t version, nlohmann::json header,
                     std::span<const double> payload) {
  write_file_bytes(path, encode_container(magic, version, std::move(header), payload));
}

Container read_container(const std::string& path, std::string_view magic, std::uint32_t version) {
  const auto bytes = read_file_bytes(path);
  return decode_container(bytes, magic, version);
}

}  // namespace topomo::io
