#include "autodiff/op_dispatch.hpp"

#include <array>
#include <string>
#include <utility>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace rsg::ad {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 16> kNames{{
    {OpKind::kAdd, "add"},
    {OpKind::kSub, "sub"},
    {OpKind::kMul, "mul"},
    {OpKind::kAbs, "abs"},
    {OpKind::kRelu, "relu"},
    {OpKind::kLog, "log"},
    {OpKind::kSoftmax, "softmax"},
    {OpKind::kLinear, "linear"},
    {OpKind::kConv2d, "conv2d"},
    {OpKind::kGlobalAvgPool, "global_avg_pool"},
    {OpKind::kConcatChannels, "concat_channels"},
    {OpKind::kUpsample, "upsample"},
    {OpKind::kChannelNorm, "channel_norm"},
    {OpKind::kChannelDot, "channel_dot"},
    {OpKind::kSum, "sum"},
    {OpKind::kMean, "mean"},
}};

void require_arity(OpKind kind, std::span<const Tensor> inputs, std::size_t lo, std::size_t hi) {
  if (inputs.size() < lo || inputs.size() > hi) {
    throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(lo) +
                     (lo == hi ? "" : ".." + std::to_string(hi)) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
}

}  // namespace

OpKind parse_op_kind(std::string_view name) {
  for (const auto& [kind, n] : kNames) {
    if (n == name) return kind;
  }
  throw ValidationError("unknown op kind '" + std::string(name) + "'");
}

std::string_view op_name(OpKind kind) {
  for (const auto& [k, n] : kNames) {
    if (k == kind) return n;
  }
  throw ValidationError("unknown op kind #" + std::to_string(static_cast<int>(kind)));
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpParams& params) {
  switch (kind) {
    case OpKind::kAdd:
      require_arity(kind, inputs, 2, 2);
      return add(inputs[0], inputs[1]);
    case OpKind::kSub:
      require_arity(kind, inputs, 2, 2);
      return sub(inputs[0], inputs[1]);
    case OpKind::kMul:
      require_arity(kind, inputs, 2, 2);
      return mul(inputs[0], inputs[1]);
    case OpKind::kAbs:
      require_arity(kind, inputs, 1, 1);
      return abs(inputs[0]);
    case OpKind::kRelu:
      require_arity(kind, inputs, 1, 1);
      return relu(inputs[0]);
    case OpKind::kLog:
      require_arity(kind, inputs, 1, 1);
      return log(inputs[0], params.floor);
    case OpKind::kSoftmax:
      require_arity(kind, inputs, 1, 1);
      return softmax(inputs[0]);
    case OpKind::kLinear:
      require_arity(kind, inputs, 2, 3);
      return linear(inputs[0], inputs[1], inputs.size() == 3 ? inputs[2] : Tensor{});
    case OpKind::kConv2d:
      require_arity(kind, inputs, 2, 3);
      return conv2d(inputs[0], inputs[1], inputs.size() == 3 ? inputs[2] : Tensor{}, params.stride,
                    params.padding);
    case OpKind::kGlobalAvgPool:
      require_arity(kind, inputs, 1, 1);
      return global_avg_pool(inputs[0]);
    case OpKind::kConcatChannels:
      require_arity(kind, inputs, 2, 2);
      return concat_channels(inputs[0], inputs[1]);
    case OpKind::kUpsample:
      require_arity(kind, inputs, 1, 1);
      return upsample(inputs[0], params.height, params.width);
    case OpKind::kChannelNorm:
      require_arity(kind, inputs, 1, 1);
      return channel_norm(inputs[0]);
    case OpKind::kChannelDot:
      require_arity(kind, inputs, 2, 2);
      return channel_dot(inputs[0], inputs[1]);
    case OpKind::kSum:
      require_arity(kind, inputs, 1, 1);
      return sum(inputs[0]);
    case OpKind::kMean:
      require_arity(kind, inputs, 1, 1);
      return mean(inputs[0]);
  }
  throw ValidationError("unknown op kind #" + std::to_string(static_cast<int>(kind)));
}

}  // namespace rsg::ad
