#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uigroup/tensor.hpp"

namespace uigroup {

// On-disk model snapshot. Layout (all integers little-endian):
//   "EGFE" | u32 version | u32 config_len | config JSON bytes |
//   records: u32 name_len | name | u32 rank | u64 dims[rank] | f32 payload |
//   trailing u32 CRC-32 of everything before it.
// Loading then saving is byte-identical: the config string and parameter
// order are preserved verbatim.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string config_json;
  std::vector<std::pair<std::string, TensorF>> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t size);

}  // namespace uigroup
