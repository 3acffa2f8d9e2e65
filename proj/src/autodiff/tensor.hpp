#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rsg::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl;

/// One recorded operation. `backward` receives the gradient of the output
/// and accumulates into the gradients of `inputs` that require grad.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(std::span<const double>)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  /// Gradient buffer, zero-filled on first access.
  std::span<double> grad_buffer();
};

/// Dense float64 tensor with shared ownership. Copies alias the same storage,
/// matching the usual handle semantics of define-by-run engines.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view of the values. Only meaningful on leaves; mutating an
  /// intermediate does not re-run its producers.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient values, or zeros when nothing has been accumulated.
  std::vector<double> grad_or_zeros() const;
  /// Drops the accumulated gradient; has_grad() is false afterwards.
  void zero_grad();

  /// New leaf holding a copy of the values and no graph history.
  Tensor detach() const;
  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are reset at the start of each sweep.
void backpropagate(const Tensor& loss);

bool grad_mode_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

using BackwardFn = std::function<void(std::span<const double>)>;

/// Builds an op output and, if grad mode is on and an input requires grad,
/// attaches the node that makes it differentiable.
Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

}  // namespace detail

}  // namespace rsg::ad
