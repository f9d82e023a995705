#pragma once

// Single-file checkpoint:
//   "TTFSCK01" | u32 version | u64 manifest bytes | u32 manifest CRC-32 |
//   manifest (JSON, sorted keys) | parameter blob
// Integers are little-endian. The blob holds every float tensor as
// little-endian IEEE-754 binary32, row-major, in declaration order; the
// manifest records each tensor's shape and byte offset plus the blob CRC-32.
// Kernel parameters are doubles and live in the manifest.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ttfs/network.hpp"

namespace ttfs::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkState net;
  std::uint32_t epoch = 0;  // epochs completed
  std::string shuffle_rng;
  std::string relax_rng;
};

std::string encode_checkpoint(const Checkpoint& c);
// Throws FormatError (bad magic, truncation, malformed manifest),
// VersionError and ChecksumError.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Little-endian binary32 codec, independent of host byte order.
void append_f32_le(std::string& out, std::span<const float> values);
std::vector<float> read_f32_le(std::string_view bytes);

std::uint32_t crc32(std::string_view bytes);

}  // namespace ttfs::io
