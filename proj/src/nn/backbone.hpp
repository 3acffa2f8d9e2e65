#pragma once

#include <cstddef>
#include <vector>

#include "autodiff/tensor.hpp"
#include "nn/init.hpp"

namespace rsg::nn {

struct BackboneSpec {
  std::size_t in_channels = 3;
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::size_t blocks_per_stage = 2;
  std::size_t n_cls = 10;
  /// The RSG hook sits at the output of this stage (1-based), i.e. just
  /// before the stride-2 convolution that opens the next stage.
  std::size_t insertion_stage = 2;
  /// Optional per-conv batch normalization. Off by default: with it on, rows
  /// of a batch are no longer independent.
  bool batch_norm = false;

  void validate() const;
};

/// Residual CNN: stem conv, then stages of (conv3x3-ReLU-conv3x3 + skip)
/// blocks, with a stride-2 conv between stages, global average pooling and a
/// linear classifier. Convolutions carry no bias.
class Backbone {
 public:
  Backbone(BackboneSpec spec, Rng& rng);

  const BackboneSpec& spec() const { return spec_; }
  /// Channels at the insertion point.
  std::size_t hook_channels() const;

  ad::Tensor forward_to_hook(const ad::Tensor& images);
  ad::Tensor forward_from_hook(const ad::Tensor& features);
  ad::Tensor forward(const ad::Tensor& images);

  /// Training mode only matters for batch normalization.
  void set_training(bool training) { training_ = training; }

  std::vector<ad::Tensor> parameters() const;
  /// Batch-norm running statistics, in checkpoint order.
  std::vector<std::vector<double>*> buffers();

 private:
  struct Conv {
    ad::Tensor weight;
    std::size_t stride = 1;
    ad::Tensor gamma, beta;
    std::vector<double> running_mean, running_var;
  };
  struct Block {
    Conv a, b;
  };
  struct Stage {
    Conv down;  // undefined weight for the first stage
    std::vector<Block> blocks;
  };

  Conv make_conv(std::size_t in, std::size_t out, std::size_t stride, Rng& rng) const;
  ad::Tensor apply(Conv& conv, const ad::Tensor& x);
  ad::Tensor run_stage(Stage& stage, ad::Tensor x);

  BackboneSpec spec_;
  bool training_ = true;
  Conv stem_;
  std::vector<Stage> stages_;
  ad::Tensor fc_weight_, fc_bias_;
};

}  // namespace rsg::nn
