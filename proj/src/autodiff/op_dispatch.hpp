#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "autodiff/tensor.hpp"

namespace rsg::ad {

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kAbs,
  kRelu,
  kLog,
  kSoftmax,
  kLinear,
  kConv2d,
  kGlobalAvgPool,
  kConcatChannels,
  kUpsample,
  kChannelNorm,
  kChannelDot,
  kSum,
  kMean,
};

struct OpParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t height = 0;  // upsample target
  std::size_t width = 0;
  double floor = 0.0;      // log clamp
};

/// Parses the lower-case op name ("conv2d", "global_avg_pool", ...).
/// Throws ValidationError for names that are not op kinds.
OpKind parse_op_kind(std::string_view name);
std::string_view op_name(OpKind kind);

/// Uniform entry point over the op set. Arity and shapes are checked; linear
/// and conv2d take an optional trailing bias input.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpParams& params = {});

}  // namespace rsg::ad
