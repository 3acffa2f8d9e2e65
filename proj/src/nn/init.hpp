#pragma once

#include <cstddef>
#include <random>

#include "autodiff/tensor.hpp"

namespace rsg {

/// Every random draw in the library goes through this engine so that a run is
/// reproducible from its seed.
using Rng = std::mt19937_64;

namespace nn {

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for affine layers.
ad::Tensor uniform_fan_in(ad::Shape shape, std::size_t fan_in, Rng& rng);
/// N(0, 2/fan_in) for layers followed by ReLU.
ad::Tensor kaiming_normal(ad::Shape shape, std::size_t fan_in, Rng& rng);
ad::Tensor normal(ad::Shape shape, double stddev, Rng& rng);

}  // namespace nn
}  // namespace rsg
