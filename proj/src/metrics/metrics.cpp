#include "metrics/metrics.hpp"

#include "common/error.hpp"

namespace rsg::metrics {

std::vector<std::size_t> predictions(const ad::Tensor& logits) {
  if (!logits.defined() || logits.rank() != 2) {
    throw ShapeError("predictions: logits must be [N, n_cls]");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  auto v = logits.values();
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (v[i * c + j] > v[i * c + best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

std::vector<std::optional<double>> per_class_error(std::span<const std::size_t> predicted,
                                                   std::span<const std::size_t> labels,
                                                   std::size_t n_cls) {
  if (predicted.size() != labels.size()) {
    throw ShapeError("per_class_error: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ValidationError("per_class_error: empty evaluation set");
  std::vector<std::size_t> count(n_cls, 0), correct(n_cls, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_cls) {
      throw ValidationError("per_class_error: label " + std::to_string(labels[i]) +
                            " out of range");
    }
    ++count[labels[i]];
    if (predicted[i] == labels[i]) ++correct[labels[i]];
  }
  std::vector<std::optional<double>> out(n_cls);
  for (std::size_t c = 0; c < n_cls; ++c) {
    if (count[c] > 0) {
      out[c] = 100.0 * (1.0 - static_cast<double>(correct[c]) / static_cast<double>(count[c]));
    }
  }
  return out;
}

std::vector<std::optional<double>> per_class_error(const ad::Tensor& logits,
                                                   std::span<const std::size_t> labels) {
  return per_class_error(predictions(logits), labels, logits.dim(1));
}

double top1_error(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw ShapeError("top1_error: need equally many predictions and labels, at least one");
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predicted[i] != labels[i];
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(labels.size());
}

ShotBucket shot_bucket(std::size_t train_count) {
  if (train_count > 100) return ShotBucket::kMany;
  if (train_count < 20) return ShotBucket::kFew;
  return ShotBucket::kMedium;
}

ShotSplit shot_split_report(std::span<const std::optional<double>> per_class_err,
                            std::span<const std::size_t> train_counts) {
  if (per_class_err.size() != train_counts.size()) {
    throw ShapeError("shot_split_report: " + std::to_string(per_class_err.size()) +
                     " error rows for " + std::to_string(train_counts.size()) + " counts");
  }
  double sum[3] = {0, 0, 0};
  std::size_t n[3] = {0, 0, 0};
  for (std::size_t c = 0; c < train_counts.size(); ++c) {
    if (!per_class_err[c]) continue;
    const auto b = static_cast<std::size_t>(shot_bucket(train_counts[c]));
    sum[b] += 100.0 - *per_class_err[c];
    ++n[b];
  }
  auto mean = [&](std::size_t b) -> std::optional<double> {
    if (n[b] == 0) return std::nullopt;
    return sum[b] / static_cast<double>(n[b]);
  };
  return {mean(0), mean(1), mean(2)};
}

}  // namespace rsg::metrics
