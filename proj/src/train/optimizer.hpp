#pragma once

#include <cstddef>
#include <vector>

#include "autodiff/tensor.hpp"

namespace rsg::train {

struct ParamGroup {
  std::vector<ad::Tensor> params;
  double weight_decay = 0.0;
};

/// SGD with classical momentum:
///   v <- momentum * v + (g + weight_decay * p)
///   p <- p - lr * v
/// Parameters that do not require grad, or received no gradient this step,
/// are left untouched together with their momentum buffers.
class Sgd {
 public:
  Sgd(std::vector<ParamGroup> groups, double momentum);

  void step(double lr);
  void zero_grad();

  std::size_t num_params() const;
  /// Momentum buffer of the i-th parameter in group order.
  const std::vector<double>& velocity(std::size_t i) const { return velocity_[i]; }

 private:
  std::vector<ParamGroup> groups_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace rsg::train
