#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stormcast::nd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// One vertex of the computation record. Results of differentiable ops keep
/// their inputs and a closure that pushes this node's gradient into them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Dense row-major float64 tensor with shared ownership of its node.
/// Copies alias the same storage; use detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor from_node(std::shared_ptr<Node> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// In-place access for leaves (parameters, optimizer updates).
  std::span<double> mutable_values() { return node_->value; }
  /// Empty until a backward pass reaches this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return !node_->backward; }
  const std::string& op() const { return node_->op; }
  void zero_grad();

  Tensor detach() const;
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Topologically ordered nodes reachable from a loss through grad-requiring edges.
/// Each node appears exactly once, loss last.
std::vector<Node*> computation_record(const Tensor& loss);

/// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
/// grad-requiring leaf. Throws ShapeError for non-scalar loss and
/// std::logic_error when the loss carries no record.
void backward(const Tensor& loss);

}  // namespace stormcast::nd
