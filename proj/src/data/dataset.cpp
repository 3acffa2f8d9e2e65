#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "common/error.hpp"
#include "data/cifar.hpp"
#include "rsg/rsg_module.hpp"

namespace rsg::data {

void DatasetSpec::validate() const {
  if (n_cls < 2) throw ValidationError("dataset: n_cls must be at least 2");
  if (!(rho >= 1.0)) throw ValidationError("dataset: rho must be >= 1");
  if (n_max < 1) throw ValidationError("dataset: n_max must be positive");
  if (imbalance == ImbalanceType::kStep && n_cls % 2 != 0) {
    throw ValidationError("dataset: step imbalance needs an even class count, got " +
                          std::to_string(n_cls));
  }
  if (source == Source::kSyntheticGaussian) {
    if (!(class_sep > 0.0)) throw ValidationError("dataset: class_sep must be positive");
    if (dim == 0 || height * width != dim) {
      throw ValidationError("dataset: dim " + std::to_string(dim) + " is not " +
                            std::to_string(height) + " x " + std::to_string(width));
    }
  } else if (cifar_dir.empty()) {
    throw ValidationError("dataset: cifar10-binary source needs cifar_dir");
  }
}

std::span<const double> Dataset::image(std::size_t i) const {
  return std::span<const double>(pixels).subspan(i * shape.size(), shape.size());
}

std::vector<std::size_t> Dataset::class_counts(std::size_t n_cls) const {
  std::vector<std::size_t> counts(n_cls, 0);
  for (auto l : labels) {
    if (l >= n_cls) {
      throw ValidationError("dataset: label " + std::to_string(l) + " out of range for " +
                            std::to_string(n_cls) + " classes");
    }
    ++counts[l];
  }
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.shape = shape;
  out.pixels.reserve(indices.size() * shape.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> long_tailed_counts(std::size_t n_max, double rho, std::size_t n_cls) {
  if (n_cls < 2) throw ValidationError("long_tailed_counts: n_cls must be at least 2");
  if (n_max < 1 || !(rho >= 1.0)) {
    throw ValidationError("long_tailed_counts: need n_max >= 1 and rho >= 1");
  }
  std::vector<std::size_t> counts(n_cls);
  for (std::size_t i = 0; i < n_cls; ++i) {
    const double e = -static_cast<double>(i) / static_cast<double>(n_cls - 1);
    const double v = std::round(static_cast<double>(n_max) * std::pow(rho, e));
    counts[i] = std::max<std::size_t>(1, static_cast<std::size_t>(v));
  }
  return counts;
}

std::vector<std::size_t> step_counts(std::size_t n_max, double rho, std::size_t n_cls) {
  if (n_cls < 2 || n_cls % 2 != 0) {
    throw ValidationError("step_counts: n_cls must be even, got " + std::to_string(n_cls));
  }
  if (n_max < 1 || !(rho >= 1.0)) throw ValidationError("step_counts: need n_max >= 1 and rho >= 1");
  const auto minority = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(static_cast<double>(n_max) / rho)));
  std::vector<std::size_t> counts(n_cls, n_max);
  std::fill(counts.begin() + static_cast<long>(n_cls / 2), counts.end(), minority);
  return counts;
}

std::vector<std::size_t> imbalance_counts(const DatasetSpec& spec) {
  switch (spec.imbalance) {
    case ImbalanceType::kLongTailed:
      return long_tailed_counts(spec.n_max, spec.rho, spec.n_cls);
    case ImbalanceType::kStep:
      return step_counts(spec.n_max, spec.rho, spec.n_cls);
    case ImbalanceType::kNone:
      break;
  }
  return std::vector<std::size_t>(spec.n_cls, spec.n_max);
}

std::vector<std::size_t> select_imbalanced_indices(std::span<const std::size_t> labels,
                                                   std::span<const std::size_t> counts,
                                                   std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(counts.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= counts.size()) {
      throw ValidationError("make_imbalanced: label " + std::to_string(labels[i]) +
                            " has no target count");
    }
    by_class[labels[i]].push_back(i);
  }
  Rng rng = make_rng(seed, 0x1b);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    auto& pool = by_class[c];
    if (counts[c] > pool.size()) {
      throw ValidationError("make_imbalanced: class " + std::to_string(c) + " needs " +
                            std::to_string(counts[c]) + " examples but only " +
                            std::to_string(pool.size()) + " are available");
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    keep.insert(keep.end(), pool.begin(), pool.begin() + static_cast<long>(counts[c]));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

Dataset make_imbalanced(const Dataset& data, std::span<const std::size_t> counts,
                        std::uint64_t seed) {
  auto keep = select_imbalanced_indices(data.labels, counts, seed);
  return data.subset(keep);
}

std::vector<std::vector<double>> synth_class_means(const DatasetSpec& spec) {
  Rng rng = make_rng(spec.seed, 0x11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < spec.n_cls; ++c) {
    std::vector<double> v(spec.dim);
    double norm = 0.0;
    // Re-draw on the (measure-zero) chance of a degenerate direction.
    while (norm < 1e-6) {
      for (double& x : v) x = normal(rng);
      if (c < spec.dim) {
        for (const auto& prev : means) {
          double dot = 0.0, pp = 0.0;
          for (std::size_t d = 0; d < spec.dim; ++d) {
            dot += v[d] * prev[d];
            pp += prev[d] * prev[d];
          }
          for (std::size_t d = 0; d < spec.dim; ++d) v[d] -= dot / pp * prev[d];
        }
      }
      norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    }
    for (double& x : v) x *= spec.class_sep / norm;
    means.push_back(std::move(v));
  }
  return means;
}

namespace {

Dataset sample_gaussians(const DatasetSpec& spec, const std::vector<std::vector<double>>& means,
                         std::size_t per_class, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.shape = ImageShape{1, spec.height, spec.width};
  out.pixels.reserve(spec.n_cls * per_class * spec.dim);
  for (std::size_t c = 0; c < spec.n_cls; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t d = 0; d < spec.dim; ++d) out.pixels.push_back(means[c][d] + normal(rng));
      out.labels.push_back(c);
    }
  }
  return out;
}

}  // namespace

Splits synth_gaussian_dataset(const DatasetSpec& spec) {
  DatasetSpec s = spec;
  s.source = Source::kSyntheticGaussian;
  s.validate();
  const auto means = synth_class_means(s);
  Rng train_rng = make_rng(s.seed, 0x12);
  Rng val_rng = make_rng(s.seed, 0x13);
  Dataset pool = sample_gaussians(s, means, s.n_max, train_rng);
  Splits out;
  out.train = make_imbalanced(pool, imbalance_counts(s), s.seed);
  out.val = sample_gaussians(s, means, s.val_per_class, val_rng);
  return out;
}

Splits build_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.source == Source::kSyntheticGaussian) return synth_gaussian_dataset(spec);
  if (spec.n_cls != 10) throw ValidationError("dataset: CIFAR-10 has exactly 10 classes");
  Splits raw = load_cifar10_binary(spec.cifar_dir);
  Splits out;
  out.train = make_imbalanced(raw.train, imbalance_counts(spec), spec.seed);
  out.val = std::move(raw.val);
  const ChannelStats stats = compute_channel_stats(out.train);
  standardize(out.train, stats);
  standardize(out.val, stats);
  return out;
}

ChannelStats compute_channel_stats(const Dataset& data) {
  const auto& sh = data.shape;
  const std::size_t plane = sh.height * sh.width;
  ChannelStats stats;
  stats.mean.assign(sh.channels, 0.0);
  stats.stddev.assign(sh.channels, 0.0);
  if (data.size() == 0) throw ValidationError("compute_channel_stats: empty dataset");
  const double count = static_cast<double>(data.size() * plane);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t c = 0; c < sh.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) stats.mean[c] += data.pixels[(i * sh.channels + c) * plane + p];
  for (auto& m : stats.mean) m /= count;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t c = 0; c < sh.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = data.pixels[(i * sh.channels + c) * plane + p] - stats.mean[c];
        stats.stddev[c] += d * d;
      }
  for (auto& s : stats.stddev) s = std::max(std::sqrt(s / count), 1e-12);
  return stats;
}

void standardize(Dataset& data, const ChannelStats& stats) {
  const auto& sh = data.shape;
  if (stats.mean.size() != sh.channels || stats.stddev.size() != sh.channels) {
    throw ShapeError("standardize: statistics cover " + std::to_string(stats.mean.size()) +
                     " channels, images have " + std::to_string(sh.channels));
  }
  const std::size_t plane = sh.height * sh.width;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t c = 0; c < sh.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        double& v = data.pixels[(i * sh.channels + c) * plane + p];
        v = (v - stats.mean[c]) / stats.stddev[c];
      }
}

void augment_crop_flip(std::span<double> images, const ImageShape& shape, std::size_t pad,
                       Rng& rng) {
  const std::size_t sz = shape.size();
  if (sz == 0 || images.size() % sz != 0) {
    throw ShapeError("augment_crop_flip: buffer is not a whole number of images");
  }
  const std::size_t h = shape.height, w = shape.width;
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  std::bernoulli_distribution flip(0.5);
  std::vector<double> src(sz);
  for (std::size_t n = 0; n < images.size() / sz; ++n) {
    auto img = images.subspan(n * sz, sz);
    std::copy(img.begin(), img.end(), src.begin());
    const std::size_t oy = offset(rng), ox = offset(rng);
    const bool mirror = flip(rng);
    for (std::size_t c = 0; c < shape.channels; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          // Coordinates in the padded image map back by -pad.
          const long sy = static_cast<long>(y + oy) - static_cast<long>(pad);
          const std::size_t xx = mirror ? w - 1 - x : x;
          const long sx = static_cast<long>(xx + ox) - static_cast<long>(pad);
          double v = 0.0;
          if (sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w)) {
            v = src[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
          }
          img[(c * h + y) * w + x] = v;
        }
  }
}

MiniBatch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                     const FreqRareSplit* split) {
  MiniBatch batch;
  batch.indices.assign(indices.begin(), indices.end());
  std::vector<double> pixels;
  pixels.reserve(indices.size() * data.shape.size());
  for (auto i : indices) {
    if (i >= data.size()) {
      throw ValidationError("make_batch: index " + std::to_string(i) + " out of range");
    }
    auto img = data.image(i);
    pixels.insert(pixels.end(), img.begin(), img.end());
    batch.labels.push_back(data.labels[i]);
    batch.frequent.push_back(split ? split->is_frequent(data.labels[i]) : false);
  }
  batch.images = ad::Tensor::from(
      {indices.size(), data.shape.channels, data.shape.height, data.shape.width},
      std::move(pixels));
  return batch;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 2) throw ValidationError("batch_sampler: batch_size must be at least 2");
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::size_t e) const {
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed_, 0x100000 + e);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_; start += batch_size_) {
    const std::size_t end = std::min(n_, start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::string to_string(Source s) {
  return s == Source::kSyntheticGaussian ? "synthetic-gaussian" : "cifar10-binary";
}

std::string to_string(ImbalanceType t) {
  switch (t) {
    case ImbalanceType::kLongTailed:
      return "long-tailed";
    case ImbalanceType::kStep:
      return "step";
    case ImbalanceType::kNone:
      break;
  }
  return "none";
}

Source parse_source(const std::string& s) {
  if (s == "synthetic-gaussian") return Source::kSyntheticGaussian;
  if (s == "cifar10-binary") return Source::kCifar10Binary;
  throw ValidationError("unknown dataset source '" + s + "'");
}

ImbalanceType parse_imbalance(const std::string& s) {
  if (s == "long-tailed") return ImbalanceType::kLongTailed;
  if (s == "step") return ImbalanceType::kStep;
  if (s == "none") return ImbalanceType::kNone;
  throw ValidationError("unknown imbalance type '" + s + "'");
}

}  // namespace rsg::data
