#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "nn/init.hpp"

namespace rsg {
struct FreqRareSplit;
}

namespace rsg::data {

enum class Source { kSyntheticGaussian, kCifar10Binary };
enum class ImbalanceType { kLongTailed, kStep, kNone };

struct DatasetSpec {
  Source source = Source::kSyntheticGaussian;
  std::size_t n_cls = 10;
  ImbalanceType imbalance = ImbalanceType::kLongTailed;
  double rho = 1.0;  // N_max / N_min
  std::uint64_t seed = 0;
  /// Size of the largest class. For synthetic data this is also the size of
  /// the balanced pool every class is drawn from.
  std::size_t n_max = 500;

  // Synthetic Gaussian source.
  std::size_t dim = 16;
  std::size_t height = 4;
  std::size_t width = 4;
  double class_sep = 3.0;
  std::size_t val_per_class = 200;

  // CIFAR-10 binary source.
  std::string cifar_dir;
  bool augment = true;

  void validate() const;
};

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// Images stored contiguously in [N, C, H, W] order with one label each.
struct Dataset {
  ImageShape shape;
  std::vector<double> pixels;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> image(std::size_t i) const;
  std::vector<std::size_t> class_counts(std::size_t n_cls) const;
  /// Copy of the given examples, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct Splits {
  Dataset train;
  Dataset val;
};

/// counts[i] = max(1, round(n_max * rho^(-i / (n_cls - 1)))).
std::vector<std::size_t> long_tailed_counts(std::size_t n_max, double rho, std::size_t n_cls);
/// First half of the classes keep n_max, the rest get round(n_max / rho).
std::vector<std::size_t> step_counts(std::size_t n_max, double rho, std::size_t n_cls);
std::vector<std::size_t> imbalance_counts(const DatasetSpec& spec);

/// Seeded per-class subsample without replacement; returned indices are
/// sorted so the surviving examples keep their original order.
std::vector<std::size_t> select_imbalanced_indices(std::span<const std::size_t> labels,
                                                   std::span<const std::size_t> counts,
                                                   std::uint64_t seed);
Dataset make_imbalanced(const Dataset& data, std::span<const std::size_t> counts,
                        std::uint64_t seed);

/// Isotropic unit-variance Gaussians whose means sit at distance class_sep
/// from the origin along seeded random directions (mutually orthogonal while
/// n_cls <= dim). Train follows the imbalance profile, validation is
/// balanced with val_per_class examples per class.
Splits synth_gaussian_dataset(const DatasetSpec& spec);
/// The class means used by synth_gaussian_dataset, [n_cls][dim].
std::vector<std::vector<double>> synth_class_means(const DatasetSpec& spec);

/// Builds the splits described by a DatasetSpec, including imbalancing and, for
/// CIFAR, standardization.
Splits build_dataset(const DatasetSpec& spec);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};
ChannelStats compute_channel_stats(const Dataset& data);
void standardize(Dataset& data, const ChannelStats& stats);

/// Pads by `pad` zeros, takes a random crop of the original size and flips
/// horizontally with probability 1/2, independently per image.
void augment_crop_flip(std::span<double> images, const ImageShape& shape, std::size_t pad,
                       Rng& rng);

struct MiniBatch {
  ad::Tensor images;  // [s, C, H, W]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;  // rows of the source dataset
  std::vector<bool> frequent;        // per row, from the frequent/rare split
};

MiniBatch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                     const FreqRareSplit* split = nullptr);

/// Shuffled epochs: the order of epoch e depends only on (seed, e). The final
/// short batch is kept.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> epoch(std::size_t e) const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

/// Seeds a fresh engine from a base seed and a stream tag so that
/// independent consumers never share random draws.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

std::string to_string(Source s);
std::string to_string(ImbalanceType t);
Source parse_source(const std::string& s);
ImbalanceType parse_imbalance(const std::string& s);

}  // namespace rsg::data
