#include "data/flatfile.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "common/error.hpp"

namespace rsg::data {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void expect_magic() {
    need(kFlatMagic.size(), "magic");
    if (!std::equal(kFlatMagic.begin(), kFlatMagic.end(), bytes_.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
      throw FormatError("flat file: bad magic at byte offset 0");
    }
    pos_ += kFlatMagic.size();
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("flat file: truncated ") + what + " at byte offset " +
                        std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_flat(std::span<const FlatArray> arrays) {
  std::vector<std::uint8_t> out(kFlatMagic.begin(), kFlatMagic.end());
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    std::size_t n = 1;
    for (auto d : a.shape) n *= d;
    if (n != a.values.size()) {
      throw ShapeError("flat file: array shape does not match its " +
                       std::to_string(a.values.size()) + " values");
    }
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_u32(out, d);
    for (float v : a.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<FlatArray> decode_flat(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic();
  const std::uint32_t count = r.u32();
  std::vector<FlatArray> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    FlatArray a;
    const std::uint32_t rank = r.u32();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.u32());
      n *= a.shape.back();
    }
    if (n * 4 > r.remaining()) {
      throw FormatError("flat file: array " + std::to_string(i) + " needs " +
                        std::to_string(n * 4) + " bytes at byte offset " +
                        std::to_string(r.pos()) + ", only " + std::to_string(r.remaining()) +
                        " remain");
    }
    a.values.resize(n);
    for (auto& v : a.values) v = r.f32();
    arrays.push_back(std::move(a));
  }
  if (r.remaining() != 0) {
    throw FormatError("flat file: trailing bytes at byte offset " + std::to_string(r.pos()));
  }
  return arrays;
}

void write_flat_file(const std::filesystem::path& path, std::span<const FlatArray> arrays) {
  const auto bytes = encode_flat(arrays);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<FlatArray> read_flat_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_flat(bytes);
}

void write_dataset_cache(const std::filesystem::path& path, const Dataset& data) {
  FlatArray images, labels;
  images.shape = {static_cast<std::uint32_t>(data.size()),
                  static_cast<std::uint32_t>(data.shape.channels),
                  static_cast<std::uint32_t>(data.shape.height),
                  static_cast<std::uint32_t>(data.shape.width)};
  images.values.assign(data.pixels.begin(), data.pixels.end());
  labels.shape = {static_cast<std::uint32_t>(data.size())};
  labels.values.assign(data.labels.begin(), data.labels.end());
  const FlatArray arrays[] = {std::move(images), std::move(labels)};
  write_flat_file(path, arrays);
}

Dataset read_dataset_cache(const std::filesystem::path& path) {
  auto arrays = read_flat_file(path);
  if (arrays.size() != 2 || arrays[0].shape.size() != 4 || arrays[1].shape.size() != 1 ||
      arrays[0].shape[0] != arrays[1].shape[0]) {
    throw FormatError(path.string() + ": not a dataset cache (expected images and labels)");
  }
  Dataset d;
  d.shape = ImageShape{arrays[0].shape[1], arrays[0].shape[2], arrays[0].shape[3]};
  if (d.shape.size() * arrays[1].shape[0] != arrays[0].values.size()) {
    throw FormatError(path.string() + ": image array size mismatch");
  }
  d.pixels.assign(arrays[0].values.begin(), arrays[0].values.end());
  for (float v : arrays[1].values) {
    if (!(v >= 0.0f) || v != std::floor(v)) {
      throw FormatError(path.string() + ": label value is not a class id");
    }
    d.labels.push_back(static_cast<std::size_t>(v));
  }
  return d;
}

}  // namespace rsg::data
