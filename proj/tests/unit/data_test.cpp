#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "common/error.hpp"
#include "data/cifar.hpp"
#include "data/dataset.hpp"
#include "data/flatfile.hpp"
#include "rsg/rsg_module.hpp"

namespace rsg::data {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rsg_data_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// imbalance profiles

TEST(LongTailedCounts, Endpoints) {
  const auto c = long_tailed_counts(5000, 50.0, 10);
  ASSERT_EQ(c.size(), 10u);
  EXPECT_EQ(c.front(), 5000u);
  EXPECT_EQ(c.back(), 100u);
}

TEST(LongTailedCounts, BalancedLimit) {
  for (auto v : long_tailed_counts(123, 1.0, 7)) EXPECT_EQ(v, 123u);
}

TEST(LongTailedCounts, FullDecaySequence) {
  const auto c = long_tailed_counts(5000, 50.0, 10);
  for (std::size_t i = 0; i < 10; ++i) {
    const double expect = 5000.0 * std::pow(50.0, -static_cast<double>(i) / 9.0);
    EXPECT_EQ(c[i], static_cast<std::size_t>(std::llround(expect))) << i;
  }
  EXPECT_TRUE(std::is_sorted(c.rbegin(), c.rend()));
}

TEST(LongTailedCounts, NeverBelowOne) {
  for (auto v : long_tailed_counts(10, 1000.0, 5)) EXPECT_GE(v, 1u);
}

TEST(StepCounts, Definition) {
  EXPECT_EQ(step_counts(5000, 50.0, 10),
            (std::vector<std::size_t>{5000, 5000, 5000, 5000, 5000, 100, 100, 100, 100, 100}));
  for (auto v : step_counts(40, 1.0, 4)) EXPECT_EQ(v, 40u);
  const auto c = step_counts(5000, 100.0, 10);
  EXPECT_EQ(std::accumulate(c.begin(), c.end(), std::size_t{0}), 25250u);
}

TEST(ImbalanceProfiles, RatioWithinRoundingTolerance) {
  for (double rho : {1.0, 10.0, 50.0, 100.0, 200.0}) {
    for (auto counts : {long_tailed_counts(5000, rho, 10), step_counts(5000, rho, 10)}) {
      const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
      const double ratio = static_cast<double>(*mx) / static_cast<double>(*mn);
      EXPECT_GE(ratio, rho * 0.99);
      EXPECT_LE(ratio, rho * 1.01);
    }
  }
}

TEST(ImbalanceProfiles, Rejections) {
  EXPECT_THROW(step_counts(10, 2.0, 5), ValidationError);
  EXPECT_THROW(long_tailed_counts(10, 2.0, 1), ValidationError);
  EXPECT_THROW(long_tailed_counts(10, 0.5, 4), ValidationError);
}

// ---------------------------------------------------------------------------
// synthetic data

DatasetSpec synth_spec() {
  DatasetSpec s;
  s.n_cls = 4;
  s.imbalance = ImbalanceType::kStep;
  s.rho = 10.0;
  s.n_max = 50;
  s.dim = 16;
  s.height = 4;
  s.width = 4;
  s.val_per_class = 20;
  s.seed = 3;
  return s;
}

TEST(SynthGaussian, BalancedCounts) {
  DatasetSpec s = synth_spec();
  s.n_cls = 2;
  s.imbalance = ImbalanceType::kNone;
  s.n_max = 100;
  const auto splits = synth_gaussian_dataset(s);
  EXPECT_EQ(splits.train.size(), 200u);
  EXPECT_EQ(splits.train.class_counts(2), (std::vector<std::size_t>{100, 100}));
}

TEST(SynthGaussian, ProfileShapeAndValidation) {
  const auto splits = synth_gaussian_dataset(synth_spec());
  EXPECT_EQ(splits.train.class_counts(4), (std::vector<std::size_t>{50, 50, 5, 5}));
  EXPECT_EQ(splits.val.class_counts(4), (std::vector<std::size_t>{20, 20, 20, 20}));
  EXPECT_EQ(splits.train.shape, (ImageShape{1, 4, 4}));
  for (double v : splits.train.pixels) EXPECT_TRUE(std::isfinite(v));
}

TEST(SynthGaussian, SameSeedSameBytes) {
  const auto a = synth_gaussian_dataset(synth_spec());
  const auto b = synth_gaussian_dataset(synth_spec());
  EXPECT_EQ(a.train.pixels, b.train.pixels);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_EQ(a.val.pixels, b.val.pixels);
  DatasetSpec other = synth_spec();
  other.seed = 4;
  EXPECT_NE(synth_gaussian_dataset(other).train.pixels, a.train.pixels);
}

TEST(SynthGaussian, MeansAtClassSeparation) {
  const auto means = synth_class_means(synth_spec());
  for (const auto& m : means) {
    EXPECT_NEAR(std::sqrt(std::inner_product(m.begin(), m.end(), m.begin(), 0.0)), 3.0, 1e-12);
  }
}

TEST(SynthGaussian, WideSeparationIsLinearlySeparable) {
  DatasetSpec s;
  s.n_cls = 2;
  s.imbalance = ImbalanceType::kNone;
  s.n_max = 500;
  s.dim = 2;
  s.height = 1;
  s.width = 2;
  s.class_sep = 6.0;
  s.val_per_class = 500;
  s.seed = 11;
  const auto splits = synth_gaussian_dataset(s);
  const auto means = synth_class_means(s);
  // Equal isotropic covariances make nearest-mean the Bayes linear rule.
  std::size_t correct = 0;
  for (std::size_t i = 0; i < splits.val.size(); ++i) {
    const auto x = splits.val.image(i);
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
      d0 += (x[d] - means[0][d]) * (x[d] - means[0][d]);
      d1 += (x[d] - means[1][d]) * (x[d] - means[1][d]);
    }
    if ((d1 < d0 ? 1u : 0u) == splits.val.labels[i]) ++correct;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(splits.val.size()), 0.99);
}

TEST(SynthGaussian, DimMustFitTheImage) {
  DatasetSpec s = synth_spec();
  s.height = 3;
  EXPECT_THROW(synth_gaussian_dataset(s), ValidationError);
}

// ---------------------------------------------------------------------------
// CIFAR binary

Dataset random_cifar(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 9);
  Dataset d;
  d.shape = ImageShape{3, 32, 32};
  for (std::size_t r = 0; r < n; ++r) {
    d.labels.push_back(static_cast<std::size_t>(label(rng)));
    for (std::size_t p = 0; p < kCifarImageBytes; ++p) d.pixels.push_back(byte(rng) / 255.0);
  }
  return d;
}

std::vector<std::uint8_t> random_cifar_bytes(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 9);
  std::vector<std::uint8_t> bytes(n * kCifarRecordBytes);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(i % kCifarRecordBytes == 0 ? label(rng) : byte(rng));
  }
  return bytes;
}

TEST(Cifar, ParseSerializeIsIdentity) {
  const auto bytes = random_cifar_bytes(7, 1);
  const Dataset d = parse_cifar10(bytes);
  ASSERT_EQ(d.size(), 7u);
  EXPECT_EQ(serialize_cifar10(d), bytes);
  const Dataset again = parse_cifar10(serialize_cifar10(random_cifar(5, 2)));
  EXPECT_EQ(again.pixels, random_cifar(5, 2).pixels);
}

TEST(Cifar, PlaneLayout) {
  std::vector<std::uint8_t> bytes(kCifarRecordBytes, 0);
  bytes[0] = 3;
  bytes[1 + 1024 + 32 * 2 + 5] = 255;  // G plane, row 2, column 5
  const Dataset d = parse_cifar10(bytes);
  EXPECT_EQ(d.labels[0], 3u);
  EXPECT_EQ(d.pixels[(1 * 32 + 2) * 32 + 5], 1.0);
}

TEST(Cifar, RecordCount) {
  EXPECT_EQ(parse_cifar10(random_cifar_bytes(10000, 3)).size(), 10000u);
}

TEST(Cifar, TruncatedFileNamesOffset) {
  const std::vector<std::uint8_t> bytes(3072, 0);
  try {
    parse_cifar10(bytes);
    FAIL() << "accepted a truncated file";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 0"), std::string::npos) << e.what();
  }
  auto two = random_cifar_bytes(2, 4);
  two.pop_back();
  try {
    parse_cifar10(two);
    FAIL() << "accepted a truncated file";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 3073"), std::string::npos) << e.what();
  }
}

TEST(Cifar, LabelAboveNineRejected) {
  auto bytes = random_cifar_bytes(3, 5);
  bytes[2 * kCifarRecordBytes] = 10;
  try {
    parse_cifar10(bytes);
    FAIL() << "accepted label 10";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 6146"), std::string::npos) << e.what();
  }
}

TEST(Cifar, LoadsDirectory) {
  const fs::path dir = temp_dir("cifar");
  auto write = [&](const std::string& name, std::size_t n, std::uint64_t seed) {
    const auto bytes = random_cifar_bytes(n, seed);
    std::ofstream(dir / name, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  };
  for (int i = 1; i <= 5; ++i) write("data_batch_" + std::to_string(i) + ".bin", 4, i);
  write("test_batch.bin", 3, 9);
  const Splits s = load_cifar10_binary(dir);
  EXPECT_EQ(s.train.size(), 20u);
  EXPECT_EQ(s.val.size(), 3u);
  fs::remove(dir / "test_batch.bin");
  EXPECT_THROW(load_cifar10_binary(dir), IoError);
  fs::remove_all(dir);
}

TEST(Standardization, ZeroMeanUnitVariancePerChannel) {
  Dataset d = random_cifar(20, 6);
  const auto stats = compute_channel_stats(d);
  standardize(d, stats);
  const auto after = compute_channel_stats(d);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(after.mean[c], 0.0, 1e-12);
    EXPECT_NEAR(after.stddev[c], 1.0, 1e-12);
  }
}

TEST(Augmentation, CropKeepsShapeAndIsSeeded) {
  Dataset d = random_cifar(4, 7);
  std::vector<double> a = d.pixels, b = d.pixels;
  Rng r1(1), r2(1);
  augment_crop_flip(a, d.shape, 4, r1);
  augment_crop_flip(b, d.shape, 4, r2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), d.pixels.size());
  // Zero padding only introduces zeros; every other value came from the image.
  std::multiset<double> source(d.pixels.begin(), d.pixels.end());
  for (double v : a) EXPECT_TRUE(v == 0.0 || source.count(v) > 0);
}

// ---------------------------------------------------------------------------
// make_imbalanced

Dataset labelled(std::vector<std::size_t> labels) {
  Dataset d;
  d.shape = ImageShape{1, 1, 1};
  for (std::size_t i = 0; i < labels.size(); ++i) d.pixels.push_back(static_cast<double>(i));
  d.labels = std::move(labels);
  return d;
}

TEST(MakeImbalanced, FullCountsIsIdentity) {
  const Dataset d = labelled({0, 1, 0, 1, 2, 2, 0});
  const std::size_t counts[] = {3, 2, 2};
  const Dataset out = make_imbalanced(d, counts, 5);
  EXPECT_EQ(out.pixels, d.pixels);
  EXPECT_EQ(out.labels, d.labels);
}

TEST(MakeImbalanced, CountsExactAndIndicesDistinct) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 300; ++i) labels.push_back(i % 3);
  const std::size_t counts[] = {100, 17, 3};
  const auto idx = select_imbalanced_indices(labels, counts, 9);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), idx.size());
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  std::vector<std::size_t> per(3, 0);
  for (auto i : idx) ++per[labels[i]];
  EXPECT_EQ(per, (std::vector<std::size_t>{100, 17, 3}));
  EXPECT_EQ(idx, select_imbalanced_indices(labels, counts, 9));
  EXPECT_NE(idx, select_imbalanced_indices(labels, counts, 10));
}

TEST(MakeImbalanced, TooManyRequestedRejected) {
  const Dataset d = labelled({0, 1});
  const std::size_t counts[] = {2, 1};
  EXPECT_THROW(make_imbalanced(d, counts, 1), ValidationError);
}

TEST(MakeImbalanced, ValidationSplitUntouched) {
  DatasetSpec s = synth_spec();
  s.imbalance = ImbalanceType::kNone;
  const auto balanced = synth_gaussian_dataset(s);
  s.imbalance = ImbalanceType::kStep;
  s.rho = 25.0;
  const auto imbalanced = synth_gaussian_dataset(s);
  EXPECT_EQ(balanced.val.pixels, imbalanced.val.pixels);
}

// ---------------------------------------------------------------------------
// batching

TEST(BatchSampler, SizesUnionAndDeterminism) {
  BatchSampler sampler(100, 32, 4);
  const auto batches = sampler.epoch(0);
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches[0].size(), 32u);
  EXPECT_EQ(batches[1].size(), 32u);
  EXPECT_EQ(batches[2].size(), 32u);
  EXPECT_EQ(batches[3].size(), 4u);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(100);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
  EXPECT_EQ(BatchSampler(100, 32, 4).epoch(0), batches);
  EXPECT_NE(sampler.epoch(1), batches);
  EXPECT_THROW(BatchSampler(10, 1, 0), ValidationError);
}

TEST(MakeBatch, CarriesFrequentFlags) {
  const Dataset d = labelled({0, 1, 2, 0});
  const std::size_t counts[] = {10, 5, 1};
  const auto split = split_freq_rare(counts, 0.67);
  const std::vector<std::size_t> idx{3, 2, 1};
  const MiniBatch b = make_batch(d, idx, &split);
  EXPECT_EQ(b.images.shape(), (ad::Shape{3, 1, 1, 1}));
  EXPECT_EQ(b.labels, (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(b.frequent, (std::vector<bool>{true, false, true}));
  EXPECT_EQ(b.images[0], 3.0);
}

// ---------------------------------------------------------------------------
// flat files

TEST(FlatFile, RoundTrip) {
  std::vector<FlatArray> arrays{{{2, 3}, {1, 2, 3, 4, 5, 6}}, {{}, {7.5f}}, {{0}, {}}};
  const auto bytes = encode_flat(arrays);
  EXPECT_TRUE(std::equal(kFlatMagic.begin(), kFlatMagic.end(), bytes.begin()));
  const auto back = decode_flat(bytes);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].shape, arrays[i].shape);
    EXPECT_EQ(back[i].values, arrays[i].values);
  }
  // 8 magic + 4 count + (4 + 8 + 24) + (4 + 0 + 4) + (4 + 4 + 0)
  EXPECT_EQ(bytes.size(), 64u);
}

TEST(FlatFile, Rejections) {
  std::vector<FlatArray> arrays{{{4}, {1, 2, 3, 4}}};
  auto bytes = encode_flat(arrays);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_flat(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  try {
    decode_flat(truncated);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_flat(trailing), FormatError);
  std::vector<FlatArray> inconsistent{{{3}, {1, 2}}};
  EXPECT_THROW(encode_flat(inconsistent), ShapeError);
}

TEST(FlatFile, DatasetCacheRoundTrip) {
  const fs::path dir = temp_dir("cache");
  const auto splits = synth_gaussian_dataset(synth_spec());
  write_dataset_cache(dir / "train.bin", splits.train);
  const Dataset back = read_dataset_cache(dir / "train.bin");
  EXPECT_EQ(back.shape, splits.train.shape);
  EXPECT_EQ(back.labels, splits.train.labels);
  ASSERT_EQ(back.pixels.size(), splits.train.pixels.size());
  for (std::size_t i = 0; i < back.pixels.size(); ++i) {
    EXPECT_EQ(back.pixels[i], static_cast<double>(static_cast<float>(splits.train.pixels[i])));
  }
  EXPECT_THROW(read_dataset_cache(dir / "missing.bin"), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace rsg::data
