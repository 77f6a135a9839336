#include "mtur/autograd.hpp"

#include <unordered_set>

#include "mtur/error.hpp"

namespace mtur {

template <typename T>
Var<T> Var<T>::make(const char* op, Tensor<T> value, std::vector<Var> inputs, BackwardFn<T> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& in : inputs) {
    if (in && in.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.node_);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

template <typename T>
Tensor<T>& Var<T>::mutable_leaf_value() {
  if (!node_ || node_->backward || node_->released) throw UsageError("mutable_leaf_value on a non-leaf node");
  return node_->value;
}

template <typename T>
Gradients<T> backward(const Var<T>& loss) {
  if (!loss) throw UsageError("backward on an empty Var");
  if (loss.value().numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  Gradients<T> result;
  if (!loss.requires_grad()) return result;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  Node<T>* root = loss.node_ptr().get();
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->released) {
      throw UsageError(std::string("backward through a consumed graph (node '") + node->op +
                       "'); run the forward pass again");
    }
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Node<T>*, Tensor<T>> grads;
  grads.emplace(root, Tensor<T>(loss.shape(), T{1}));
  GradSlots<T> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto g = grads.find(node);
    if (g == grads.end()) continue;
    if (!node->backward) continue;  // leaf
    slots.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      Node<T>* in = node->inputs[i].get();
      if (!in || !in->requires_grad) continue;
      auto [slot, inserted] = grads.try_emplace(in, Tensor<T>(in->value.shape(), T{0}));
      slots[i] = &slot->second;
    }
    node->backward(*node, g->second, slots);
    grads.erase(g);
  }

  for (Node<T>* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      node->released = true;
    } else {
      auto g = grads.find(node);
      if (g != grads.end()) result.insert(node, std::move(g->second));
    }
  }
  return result;
}

template class Var<float>;
template class Var<double>;
template Gradients<float> backward(const Var<float>&);
template Gradients<double> backward(const Var<double>&);

}  // namespace mtur
