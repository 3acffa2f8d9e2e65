#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "autodiff/tensor.hpp"

namespace rsg::losses {

/// Any scalar-valued classification loss over [N, n_cls] logits.
using ClassificationLoss =
    std::function<ad::Tensor(const ad::Tensor& logits, std::span<const std::size_t> labels)>;

struct LossWeights {
  double lambda1 = 0.1;   // CESC
  double lambda2 = 0.01;  // MV

  void validate() const;
};

/// Mean of -log p_true, with the probability floored at 1e-12.
ad::Tensor cross_entropy(const ad::Tensor& logits, std::span<const std::size_t> labels);

/// Mean of (1 - p_true)^gamma * -log p_true.
ad::Tensor focal_loss(const ad::Tensor& logits, std::span<const std::size_t> labels,
                      double gamma_focal = 2.0);

/// l_cls + lambda1 * l_cesc + lambda2 * l_mv. Absent terms contribute nothing.
ad::Tensor total_loss(const ad::Tensor& l_cls, const ad::Tensor& l_cesc,
                      const std::optional<ad::Tensor>& l_mv, const LossWeights& w);

/// "cross_entropy" or "focal".
ClassificationLoss make_classification_loss(const std::string& name, double gamma_focal = 2.0);

}  // namespace rsg::losses
