#include "train/optimizer.hpp"

#include "common/error.hpp"

namespace rsg::train {

Sgd::Sgd(std::vector<ParamGroup> groups, double momentum)
    : groups_(std::move(groups)), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("sgd: momentum must lie in [0, 1)");
  for (const auto& g : groups_) {
    for (const auto& p : g.params) {
      if (!p.defined()) throw ValidationError("sgd: undefined parameter");
      velocity_.emplace_back(p.numel(), 0.0);
    }
  }
}

std::size_t Sgd::num_params() const { return velocity_.size(); }

void Sgd::step(double lr) {
  std::size_t idx = 0;
  for (auto& g : groups_) {
    for (auto& p : g.params) {
      auto& v = velocity_[idx++];
      if (!p.requires_grad() || !p.has_grad()) continue;
      auto grad = p.grad();
      auto w = p.mutable_values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum_ * v[i] + grad[i] + g.weight_decay * w[i];
        w[i] -= lr * v[i];
      }
    }
  }
}

void Sgd::zero_grad() {
  for (auto& g : groups_) {
    for (auto& p : g.params) p.zero_grad();
  }
}

}  // namespace rsg::train
