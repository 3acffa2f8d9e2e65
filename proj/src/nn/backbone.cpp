#include "nn/backbone.hpp"

#include <string>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace rsg::nn {

void BackboneSpec::validate() const {
  if (in_channels == 0) throw ValidationError("backbone: in_channels must be positive");
  if (stage_channels.empty()) throw ValidationError("backbone: stage_channels is empty");
  for (auto c : stage_channels) {
    if (c == 0) throw ValidationError("backbone: stage channel counts must be positive");
  }
  if (n_cls < 2) throw ValidationError("backbone: need at least 2 classes");
  if (insertion_stage < 1 || insertion_stage > stage_channels.size()) {
    throw ValidationError("backbone: insertion_stage " + std::to_string(insertion_stage) +
                          " outside 1.." + std::to_string(stage_channels.size()));
  }
}

Backbone::Backbone(BackboneSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  stem_ = make_conv(spec_.in_channels, spec_.stage_channels[0], 1, rng);
  for (std::size_t s = 0; s < spec_.stage_channels.size(); ++s) {
    Stage stage;
    const std::size_t c = spec_.stage_channels[s];
    if (s > 0) stage.down = make_conv(spec_.stage_channels[s - 1], c, 2, rng);
    for (std::size_t b = 0; b < spec_.blocks_per_stage; ++b) {
      Block block;
      block.a = make_conv(c, c, 1, rng);
      block.b = make_conv(c, c, 1, rng);
      stage.blocks.push_back(std::move(block));
    }
    stages_.push_back(std::move(stage));
  }
  const std::size_t last = spec_.stage_channels.back();
  fc_weight_ = uniform_fan_in({spec_.n_cls, last}, last, rng);
  fc_bias_ = uniform_fan_in({spec_.n_cls}, last, rng);
}

std::size_t Backbone::hook_channels() const {
  return spec_.stage_channels[spec_.insertion_stage - 1];
}

Backbone::Conv Backbone::make_conv(std::size_t in, std::size_t out, std::size_t stride,
                                   Rng& rng) const {
  Conv conv;
  conv.weight = kaiming_normal({out, in, 3, 3}, in * 9, rng);
  conv.stride = stride;
  if (spec_.batch_norm) {
    conv.gamma = ad::Tensor::full({out}, 1.0, true);
    conv.beta = ad::Tensor::zeros({out}, true);
    conv.running_mean.assign(out, 0.0);
    conv.running_var.assign(out, 1.0);
  }
  return conv;
}

ad::Tensor Backbone::apply(Conv& conv, const ad::Tensor& x) {
  ad::Tensor y = ad::conv2d(x, conv.weight, ad::Tensor{}, conv.stride, 1);
  if (spec_.batch_norm) {
    y = ad::batch_norm(y, conv.gamma, conv.beta, conv.running_mean, conv.running_var, training_);
  }
  return y;
}

ad::Tensor Backbone::run_stage(Stage& stage, ad::Tensor x) {
  if (stage.down.weight.defined()) x = ad::relu(apply(stage.down, x));
  for (auto& block : stage.blocks) {
    ad::Tensor inner = apply(block.b, ad::relu(apply(block.a, x)));
    x = ad::relu(ad::add(x, inner));
  }
  return x;
}

ad::Tensor Backbone::forward_to_hook(const ad::Tensor& images) {
  if (!images.defined() || images.rank() != 4 || images.dim(1) != spec_.in_channels) {
    throw ShapeError("backbone.forward_to_hook: expected [N, " + std::to_string(spec_.in_channels) +
                     ", H, W] images, got " +
                     (images.defined() ? ad::to_string(images.shape()) : std::string("<undefined>")));
  }
  ad::Tensor x = ad::relu(apply(stem_, images));
  for (std::size_t s = 0; s < spec_.insertion_stage; ++s) x = run_stage(stages_[s], x);
  return x;
}

ad::Tensor Backbone::forward_from_hook(const ad::Tensor& features) {
  if (!features.defined() || features.rank() != 4 || features.dim(1) != hook_channels()) {
    throw ShapeError("backbone.forward_from_hook: expected [N, " + std::to_string(hook_channels()) +
                     ", H, W] features, got " +
                     (features.defined() ? ad::to_string(features.shape())
                                         : std::string("<undefined>")));
  }
  ad::Tensor x = features;
  for (std::size_t s = spec_.insertion_stage; s < stages_.size(); ++s) x = run_stage(stages_[s], x);
  return ad::linear(ad::global_avg_pool(x), fc_weight_, fc_bias_);
}

ad::Tensor Backbone::forward(const ad::Tensor& images) {
  return forward_from_hook(forward_to_hook(images));
}

std::vector<ad::Tensor> Backbone::parameters() const {
  std::vector<ad::Tensor> out;
  auto push = [&](const Conv& c) {
    out.push_back(c.weight);
    if (spec_.batch_norm) {
      out.push_back(c.gamma);
      out.push_back(c.beta);
    }
  };
  push(stem_);
  for (const auto& stage : stages_) {
    if (stage.down.weight.defined()) push(stage.down);
    for (const auto& block : stage.blocks) {
      push(block.a);
      push(block.b);
    }
  }
  out.push_back(fc_weight_);
  out.push_back(fc_bias_);
  return out;
}

std::vector<std::vector<double>*> Backbone::buffers() {
  std::vector<std::vector<double>*> out;
  if (!spec_.batch_norm) return out;
  auto push = [&](Conv& c) {
    out.push_back(&c.running_mean);
    out.push_back(&c.running_var);
  };
  push(stem_);
  for (auto& stage : stages_) {
    if (stage.down.weight.defined()) push(stage.down);
    for (auto& block : stage.blocks) {
      push(block.a);
      push(block.b);
    }
  }
  return out;
}

}  // namespace rsg::nn
