#include "autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "common/error.hpp"

namespace rsg::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->values.assign(ad::numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " needs " +
                     std::to_string(ad::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->values.size(); }

std::span<const double> Tensor::values() const { return impl_->values; }

std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return !impl_->node; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::vector<double> Tensor::grad_or_zeros() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const { return from(shape(), impl_->values, false); }

void Tensor::backward() const { backpropagate(*this); }

void backpropagate(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backpropagate: loss must be a scalar, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the reachable graph.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      TensorImpl* child = impl->node->inputs[next++].get();
      if (child->requires_grad && child->node && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  for (TensorImpl* impl : order) std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
  loss.impl()->grad_buffer()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    if (impl->node && !impl->grad.empty()) impl->node->backward(impl->grad);
  }
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (any) {
      auto node = std::make_shared<Node>();
      node->op = std::move(op);
      for (const auto& t : inputs) {
        if (t.defined()) node->inputs.push_back(t.impl());
      }
      node->backward = std::move(backward);
      impl->node = std::move(node);
      impl->requires_grad = true;
    }
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

}  // namespace rsg::ad
