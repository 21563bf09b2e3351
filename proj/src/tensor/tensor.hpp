// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace phonebench {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the recorded computation. Interior nodes keep strong
// references to their inputs; nothing points back, so graphs free themselves
// once the last Tensor handle to the output is dropped.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  // Set on leaves after a backward pass wrote into grad; cleared by zero_grad.
  bool grad_pending = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major f64 array with an optional gradient-tracking node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf that participates in gradient computation.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Same values, no history.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Every reachable leaf that requires
// gradients receives dLoss/dLeaf. Throws a contract error if the loss is not
// a scalar, carries no history, or if a reachable leaf still holds gradients
// from an earlier pass (call zero_grad first).
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace phonebench
