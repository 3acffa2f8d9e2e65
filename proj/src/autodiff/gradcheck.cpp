#include "autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common/error.hpp"

namespace rsg::ad {

namespace {

double evaluate(const std::function<Tensor()>& f, std::size_t leaf, std::size_t coord) {
  NoGradGuard no_grad;
  const double v = f().item();
  if (!std::isfinite(v)) {
    throw NumericError("finite_difference_check: non-finite value at leaf " +
                       std::to_string(leaf) + " coordinate " + std::to_string(coord));
  }
  return v;
}

}  // namespace

double finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                               double step) {
  if (!(step > 0.0)) throw ValidationError("finite_difference_check: step must be positive");
  std::vector<bool> previous;
  for (auto& t : leaves) {
    previous.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    throw NumericError("finite_difference_check: non-finite value at the base point");
  }
  backpropagate(loss);

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const std::vector<double> analytic = leaf.grad_or_zeros();
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(analytic[i])) {
        throw NumericError("finite_difference_check: non-finite gradient at leaf " +
                           std::to_string(li) + " coordinate " + std::to_string(i));
      }
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(f, li, i);
      values[i] = saved - step;
      const double down = evaluate(f, li, i);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (std::size_t li = 0; li < leaves.size(); ++li) leaves[li].set_requires_grad(previous[li]);
  return worst;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor point,
                               double step) {
  Tensor leaves[] = {point};
  return finite_difference_check([&] { return f(point); }, leaves, step);
}

}  // namespace rsg::ad
