#include "nn/init.hpp"

#include <cmath>

namespace rsg::nn {

ad::Tensor uniform_fan_in(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

ad::Tensor kaiming_normal(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  return normal(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

ad::Tensor normal(ad::Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace rsg::nn
