#include "losses/cls_losses.hpp"

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace rsg::losses {

namespace {

constexpr double kProbFloor = 1e-12;

ad::Tensor true_class_probability(const char* op, const ad::Tensor& logits,
                                  std::span<const std::size_t> labels) {
  if (!logits.defined() || logits.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected [N, n_cls] logits, got " +
                     (logits.defined() ? ad::to_string(logits.shape()) : std::string("<undefined>")));
  }
  if (labels.size() != logits.dim(0)) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.dim(0)) + " rows");
  }
  for (auto l : labels) {
    if (l >= logits.dim(1)) {
      throw ValidationError(std::string(op) + ": label " + std::to_string(l) +
                            " out of range for " + std::to_string(logits.dim(1)) + " classes");
    }
  }
  return ad::pick(ad::softmax(logits), labels);
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ValidationError("loss weights must be nonnegative");
  }
}

ad::Tensor cross_entropy(const ad::Tensor& logits, std::span<const std::size_t> labels) {
  ad::Tensor p = true_class_probability("cross_entropy", logits, labels);
  return ad::scale(ad::mean(ad::log(p, kProbFloor)), -1.0);
}

ad::Tensor focal_loss(const ad::Tensor& logits, std::span<const std::size_t> labels,
                      double gamma_focal) {
  if (!(gamma_focal >= 0.0)) throw ValidationError("focal_loss: gamma must be nonnegative");
  ad::Tensor p = true_class_probability("focal_loss", logits, labels);
  ad::Tensor nll = ad::scale(ad::log(p, kProbFloor), -1.0);
  // 1 - p can round slightly below zero when p saturates.
  ad::Tensor modulator = ad::pow(ad::clamp_min(ad::add_scalar(ad::scale(p, -1.0), 1.0), 0.0),
                                 gamma_focal);
  return ad::mean(ad::mul(modulator, nll));
}

ad::Tensor total_loss(const ad::Tensor& l_cls, const ad::Tensor& l_cesc,
                      const std::optional<ad::Tensor>& l_mv, const LossWeights& w) {
  w.validate();
  ad::Tensor total = l_cls;
  if (l_cesc.defined()) total = ad::add(total, ad::scale(l_cesc, w.lambda1));
  if (l_mv && l_mv->defined()) total = ad::add(total, ad::scale(*l_mv, w.lambda2));
  return total;
}

ClassificationLoss make_classification_loss(const std::string& name, double gamma_focal) {
  if (name == "cross_entropy") return cross_entropy;
  if (name == "focal") {
    return [gamma_focal](const ad::Tensor& logits, std::span<const std::size_t> labels) {
      return focal_loss(logits, labels, gamma_focal);
    };
  }
  throw ValidationError("unknown classification loss '" + name + "'");
}

}  // namespace rsg::losses
