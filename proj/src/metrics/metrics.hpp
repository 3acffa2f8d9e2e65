#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "autodiff/tensor.hpp"

namespace rsg::metrics {

/// Row-wise argmax of [N, n_cls] logits; ties go to the lower class id.
std::vector<std::size_t> predictions(const ad::Tensor& logits);

/// Percent error per class, or nullopt for classes absent from `labels`.
std::vector<std::optional<double>> per_class_error(std::span<const std::size_t> predicted,
                                                   std::span<const std::size_t> labels,
                                                   std::size_t n_cls);
std::vector<std::optional<double>> per_class_error(const ad::Tensor& logits,
                                                   std::span<const std::size_t> labels);

/// Percent of rows whose prediction differs from the label.
double top1_error(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);

enum class ShotBucket { kMany, kMedium, kFew };

/// More than 100 training samples is many-shot, fewer than 20 is few-shot and
/// everything from 20 to 100 inclusive is medium-shot.
ShotBucket shot_bucket(std::size_t train_count);

/// Mean accuracy (100 - error) per bucket; nullopt when a bucket has no
/// class with a defined error.
struct ShotSplit {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
};

ShotSplit shot_split_report(std::span<const std::optional<double>> per_class_err,
                            std::span<const std::size_t> train_counts);

}  // namespace rsg::metrics
