#pragma once

#include <functional>
#include <span>

#include "autodiff/tensor.hpp"

namespace rsg::ad {

/// Compares the reverse-mode gradient of a scalar function against central
/// differences. Returns the largest |analytic - numeric| / max(1, |numeric|)
/// over every coordinate of every leaf. Throws NumericError naming the leaf
/// and coordinate if the function produces a non-finite value.
///
/// `f` must be deterministic and rebuild its graph on each call. Leaves are
/// temporarily marked requires_grad and their gradients are overwritten.
double finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                               double step);

/// Single-point form: `f` maps `point` to a scalar.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor point,
                               double step);

}  // namespace rsg::ad
