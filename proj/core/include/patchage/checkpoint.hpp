#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchage/tensor.hpp"

namespace patchage {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// "PGA1" tensor container. Layout (all integers little-endian):
//
//   magic        4 bytes   "PGA1"
//   version      u32       1
//   count        u32       number of tensors
//   manifest     count x { u32 name_len, name bytes, u32 dtype (1 = float64),
//                          u32 rank, rank x u64 extent }
//   payload      count raw float64 buffers, manifest order, row-major
//   checksum     u64       FNV-1a 64 of every preceding byte
//
// Loading verifies the magic, version, sizes, and checksum and throws ArtifactError
// on any mismatch.
inline constexpr char kCheckpointMagic[4] = {'P', 'G', 'A', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<unsigned char>& bytes,
                                           const std::string& context = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace patchage
