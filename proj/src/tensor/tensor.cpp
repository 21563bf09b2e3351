// SPDX-License-Identifier: Apache-2.0
#include "tensor/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "core/error.hpp"

namespace phonebench {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  for (auto d : shape) {
    if (d == 0) fail(ErrorCode::Dimension, "tensor shape " + shape_str(shape) + " has a zero extent");
  }
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCode::Dimension, "shape " + shape_str(shape) + " does not match " +
                                   std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) fail(ErrorCode::Contract, "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) fail(ErrorCode::Contract, "requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  node_->grad_pending = false;
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value); }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorCode::Contract, "backward requires a scalar loss, got shape " +
                                  (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) fail(ErrorCode::Contract, "backward on a loss without recorded history");

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->leaf && node->grad_pending) {
      fail(ErrorCode::Contract, "gradient of a leaf was not reset since the previous backward pass");
    }
  }
  for (auto* node : order) {
    if (!node->leaf) node->grad.assign(node->value.size(), 0.0);
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf) {
      node->grad_buffer();
      node->grad_pending = true;
      continue;
    }
    if (node->backward_fn) node->backward_fn(*node);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace phonebench
