#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "data/dataset.hpp"

namespace rsg::data {

// Flat-float container used for dataset caches and checkpoints:
//
//   8 bytes   magic "RSGFLT01"
//   u32       number of arrays
//   per array:
//     u32       rank
//     u32[rank] dimensions
//     f32[prod] values
//
// All integers and floats are little-endian.
inline constexpr std::array<char, 8> kFlatMagic{'R', 'S', 'G', 'F', 'L', 'T', '0', '1'};

struct FlatArray {
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_flat(std::span<const FlatArray> arrays);
std::vector<FlatArray> decode_flat(std::span<const std::uint8_t> bytes);

void write_flat_file(const std::filesystem::path& path, std::span<const FlatArray> arrays);
std::vector<FlatArray> read_flat_file(const std::filesystem::path& path);

/// Two arrays: images [N, C, H, W] and labels [N].
void write_dataset_cache(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_cache(const std::filesystem::path& path);

}  // namespace rsg::data
