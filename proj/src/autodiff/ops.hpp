#pragma once

#include <cstddef>
#include <span>

#include "autodiff/tensor.hpp"

// Differentiable ops. Image-like tensors use [N, C, H, W] layout; a single
// feature map of shape D x W x H is passed as a batch of one.
namespace rsg::ad {

// Elementwise, operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor square(const Tensor& x);
/// Subgradient at 0 is 0.
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
/// log(max(x, floor)); the gradient is 0 where the floor is active.
Tensor log(const Tensor& x, double floor = 0.0);
/// max(x, floor); the gradient is 0 where the floor is active.
Tensor clamp_min(const Tensor& x, double floor);
/// x^exponent for x >= 0.
Tensor pow(const Tensor& x, double exponent);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sums every axis except the first: [N, ...] -> [N].
Tensor sum_per_row(const Tensor& x);

/// Softmax over the last axis of a [M] or [N, M] tensor.
Tensor softmax(const Tensor& x);

/// x[N, F] * w[O, F]^T + b[O]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Cross-correlation of x[N, C, H, W] with w[O, C, kh, kw]; `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// [N, C, H, W] -> [N, C]
Tensor global_avg_pool(const Tensor& x);
/// Repeats each row of v[N, D] over an H x W grid: -> [N, D, H, W].
Tensor upsample(const Tensor& v, std::size_t height, std::size_t width);
/// L2 norm over channels at each location: [N, D, H, W] -> [N, H, W].
/// The gradient at a zero vector is 0.
Tensor channel_norm(const Tensor& x);
/// Dot product over channels at each location: -> [N, H, W].
Tensor channel_dot(const Tensor& a, const Tensor& b);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Concatenates along the first axis.
Tensor concat_rows(const Tensor& a, const Tensor& b);
/// Selects rows along the first axis; repeated indices accumulate gradient.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// x[N, M] -> [N]: element (n, index[n]).
Tensor pick(const Tensor& x, std::span<const std::size_t> index);
/// x[N, M] -> [N, width]: columns start[n] .. start[n] + width - 1 of row n.
Tensor column_block(const Tensor& x, std::span<const std::size_t> start, std::size_t width);
Tensor reshape(const Tensor& x, Shape shape);

/// Per-channel batch normalization of [N, C, H, W]. In training mode the
/// batch statistics are used and the running estimates are updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::span<double> running_mean, std::span<double> running_var, bool training,
                  double momentum = 0.1, double eps = 1e-5);

}  // namespace rsg::ad
