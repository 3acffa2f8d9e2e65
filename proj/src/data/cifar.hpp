#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "data/dataset.hpp"

namespace rsg::data {

// CIFAR-10 binary layout: records of 1 label byte followed by 3072 pixel
// bytes (R plane, G plane, B plane, each 32x32 row-major).
inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarImageBytes + 1;
inline constexpr std::size_t kCifarClasses = 10;

/// Parses whole records; pixels are scaled to [0, 1]. Throws FormatError
/// naming the byte offset of an incomplete trailing record or of a label
/// byte above 9.
Dataset parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

/// Inverse of parse_cifar10 for 3x32x32 images with pixels on the k/255 grid.
std::vector<std::uint8_t> serialize_cifar10(const Dataset& data);

Dataset read_cifar10_file(const std::filesystem::path& path);

/// Reads data_batch_1..5.bin as train and test_batch.bin as validation.
/// Pixels stay in [0, 1]; standardization happens after imbalancing.
Splits load_cifar10_binary(const std::filesystem::path& dir);

}  // namespace rsg::data
