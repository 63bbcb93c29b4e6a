#include "tarot/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "tarot/errors.hpp"

namespace tarot {

namespace detail {

struct Node {
  std::vector<Tensor> inputs;
  Tensor::BackwardFn backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  std::shared_ptr<Node> node;  // null for leaves
};

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got shape " + shape_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got shape " + shape_string(shape()));
  return impl_->shape[1];
}

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (impl_->node) throw std::logic_error("mutable_data() is only available on leaf tensors");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

std::vector<double> Tensor::to_vector() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::is_leaf() const { return impl_->node == nullptr; }
bool Tensor::has_grad() const { return impl_->grad.has_value(); }

std::span<const double> Tensor::grad() const {
  if (!impl_->grad) throw std::logic_error("tensor has no gradient");
  return *impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           BackwardFn backward_fn) {
  Tensor out = from(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward_fn);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_string(shape()));
  }
  if (!requires_grad()) {
    throw std::logic_error("backward() on a loss that is detached from every requires_grad leaf");
  }
  if (impl_->node && impl_->node->consumed) {
    throw std::logic_error("backward() called twice on the same graph");
  }

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<detail::TensorImpl*> order;
  std::unordered_map<detail::TensorImpl*, bool> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
  visited[impl_.get()] = true;
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    if (cur->node && next < cur->node->inputs.size()) {
      detail::TensorImpl* child = cur->node->inputs[next++].impl();
      if (child->requires_grad && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(cur);
    stack.pop_back();
  }

  for (detail::TensorImpl* t : order) {
    if (!t->node && t->grad) {
      throw std::logic_error("gradient already populated on a leaf; call zero_grad() before backward()");
    }
  }

  std::unordered_map<detail::TensorImpl*, std::vector<double>> grads;
  auto buffer_for = [&](detail::TensorImpl* t) -> std::vector<double>* {
    if (!t->node) {
      if (!t->grad) t->grad.emplace(t->data.size(), 0.0);
      return &*t->grad;
    }
    auto [it, inserted] = grads.try_emplace(t);
    if (inserted) it->second.assign(t->data.size(), 0.0);
    return &it->second;
  };

  buffer_for(impl_.get())->assign(1, 1.0);
  if (!impl_->node) return;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (!t->node) continue;
    auto found = grads.find(t);
    if (found == grads.end()) continue;
    std::vector<double> gout = std::move(found->second);
    grads.erase(found);
    std::vector<std::vector<double>*> in_bufs;
    in_bufs.reserve(t->node->inputs.size());
    for (const Tensor& in : t->node->inputs) {
      in_bufs.push_back(in.requires_grad() ? buffer_for(in.impl()) : nullptr);
    }
    t->node->backward(gout, in_bufs);
    t->node->consumed = true;
  }
}

}  // namespace tarot
