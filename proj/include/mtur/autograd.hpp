#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtur/tensor.hpp"

namespace mtur {

template <typename T>
struct Node;

/// Accumulators handed to a node's backward function, one per input.
/// Entries are null for inputs that do not require gradients.
template <typename T>
using GradSlots = std::vector<Tensor<T>*>;

template <typename T>
using BackwardFn = std::function<void(const Node<T>& self, const Tensor<T>& grad_out, GradSlots<T>& grad_in)>;

/// One operation record of the define-by-run graph.
///
/// Nodes are created by ops and form a DAG through `inputs`. Leaves (no
/// backward function) are parameters or constants. A node only keeps its
/// inputs and backward function when at least one input requires a gradient,
/// so graphs built purely from constants cost nothing beyond the values.
template <typename T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  bool released = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<T> backward;

  bool is_leaf() const noexcept { return !backward && !released; }
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Builds an op node. When no input requires a gradient the inputs and the
  /// backward function are dropped.
  static Var make(const char* op, Tensor<T> value, std::vector<Var> inputs, BackwardFn<T> backward);

  explicit operator bool() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

  /// In-place access for optimizers. Only valid on leaves.
  Tensor<T>& mutable_leaf_value();

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Gradients of one backward pass, keyed by leaf node.
template <typename T>
class Gradients {
 public:
  /// Null when the leaf was unreachable from the loss.
  const Tensor<T>* find(const Var<T>& leaf) const {
    auto it = grads_.find(leaf.node());
    return it == grads_.end() ? nullptr : &it->second;
  }
  std::size_t size() const noexcept { return grads_.size(); }

  void insert(const Node<T>* leaf, Tensor<T> grad) { grads_.insert_or_assign(leaf, std::move(grad)); }

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

/// Reverse-mode differentiation of a scalar loss.
///
/// Policy: a graph is consumed by its backward pass. Interior nodes release
/// their saved state afterwards, and a second backward through any released
/// node throws UsageError. Build a fresh graph (run forward again) per step.
template <typename T>
Gradients<T> backward(const Var<T>& loss);

extern template class Var<float>;
extern template class Var<double>;
extern template Gradients<float> backward(const Var<float>&);
extern template Gradients<double> backward(const Var<double>&);

}  // namespace mtur
