#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ganilla/tensor.hpp"

namespace ganilla {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a node of the dynamic computation graph.
///
/// Leaves are either constants or parameters. Every differentiable op in
/// ops.hpp returns a new Var whose node remembers its parents only when at
/// least one of them requires a gradient, so inference builds no graph.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    return Var(std::move(node));
  }

  static Var parameter(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
  }

  /// Builds an op result. `backward` is dropped when no parent needs a grad.
  static Var from_op(Tensor<T> value, std::vector<Var> inputs, std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    for (const auto& in : inputs)
      if (in.requires_grad()) node->requires_grad = true;
    if (node->requires_grad) {
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(in.node_);
      node->backward_fn = std::move(backward);
    }
    return Var(std::move(node));
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  Node<T>* node() const noexcept { return node_.get(); }

  /// Scalar value of a one-element Var.
  T item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  void zero_grad() {
    if (node_->grad.size()) node_->grad.fill(T{0});
  }

  Var detach() const { return constant(node_->value); }

  /// Reverse-mode sweep seeded with d(self)/d(self) = 1. Requires a scalar.
  void backward() {
    if (node_->value.size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node<T>* p = n->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->grad_buffer()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && n->grad.size()) n->backward_fn(*n);
    }
    // Intermediate grads are no longer needed; leaves keep theirs.
    for (Node<T>* n : order)
      if (n->backward_fn) n->grad = Tensor<T>();
  }

 private:
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;
};

}  // namespace ganilla
