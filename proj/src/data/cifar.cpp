#include "data/cifar.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "common/error.hpp"

namespace rsg::data {

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() / kCifarRecordBytes * kCifarRecordBytes;
    throw FormatError(source + ": length " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(kCifarRecordBytes) +
                      "; truncated record at byte offset " + std::to_string(offset));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset out;
  out.shape = ImageShape{3, 32, 32};
  out.pixels.resize(n * kCifarImageBytes);
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t base = r * kCifarRecordBytes;
    const std::uint8_t label = bytes[base];
    if (label >= kCifarClasses) {
      throw FormatError(source + ": label byte " + std::to_string(label) + " at byte offset " +
                        std::to_string(base) + " exceeds 9");
    }
    out.labels[r] = label;
    for (std::size_t p = 0; p < kCifarImageBytes; ++p) {
      out.pixels[r * kCifarImageBytes + p] = static_cast<double>(bytes[base + 1 + p]) / 255.0;
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize_cifar10(const Dataset& data) {
  if (!(data.shape == ImageShape{3, 32, 32})) {
    throw ShapeError("serialize_cifar10: images must be 3x32x32");
  }
  std::vector<std::uint8_t> out(data.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.labels[r] >= kCifarClasses) {
      throw ValidationError("serialize_cifar10: label " + std::to_string(data.labels[r]) +
                            " exceeds 9");
    }
    const std::size_t base = r * kCifarRecordBytes;
    out[base] = static_cast<std::uint8_t>(data.labels[r]);
    for (std::size_t p = 0; p < kCifarImageBytes; ++p) {
      const double v = std::round(data.pixels[r * kCifarImageBytes + p] * 255.0);
      if (!(v >= 0.0 && v <= 255.0)) {
        throw ValidationError("serialize_cifar10: pixel outside [0, 1] in record " +
                              std::to_string(r));
      }
      out[base + 1 + p] = static_cast<std::uint8_t>(v);
    }
  }
  return out;
}

Dataset read_cifar10_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_cifar10(bytes, path.string());
}

Splits load_cifar10_binary(const std::filesystem::path& dir) {
  Splits out;
  out.train.shape = ImageShape{3, 32, 32};
  for (int b = 1; b <= 5; ++b) {
    Dataset part = read_cifar10_file(dir / ("data_batch_" + std::to_string(b) + ".bin"));
    out.train.pixels.insert(out.train.pixels.end(), part.pixels.begin(), part.pixels.end());
    out.train.labels.insert(out.train.labels.end(), part.labels.begin(), part.labels.end());
  }
  out.val = read_cifar10_file(dir / "test_batch.bin");
  return out;
}

}  // namespace rsg::data
