#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tarot {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

// Dense row-major tensor of doubles with optional participation in a reverse-mode tape.
//
// Tensor is a shared handle: copies alias the same storage, the way autograd
// frameworks usually behave. Values produced by ops are immutable; only leaves
// (parameters) are mutated, and only by optimizers or checkpoint loading.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Only valid on leaves; throws on op outputs.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no tape history, requires_grad = false.
  Tensor detach() const;

  // Runs reverse-mode differentiation from this scalar. Throws if this is not a
  // scalar, does not depend on any requires_grad leaf, was already
  // backpropagated, or reaches a leaf whose grad has not been reset.
  void backward() const;

  detail::TensorImpl* impl() const { return impl_.get(); }

  // Op construction: `out` owns fresh data; `backward_fn` receives the output
  // gradient and one mutable input-gradient buffer per input (nullptr when that
  // input does not require grad).
  using BackwardFn =
      std::function<void(std::span<const double> grad_out, std::span<std::vector<double>*> grad_in)>;
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                            BackwardFn backward_fn);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace tarot
