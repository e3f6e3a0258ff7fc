// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_GRAPH_HPP
#define SLIMNET_GRAPH_HPP

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "slimnet/tensor.hpp"

namespace slimnet {

/// A node in a define-by-run reverse-mode differentiation graph. Leaves are
/// created with `leaf` (trainable) or `constant` (no gradient); every op in
/// ops.hpp produces an interior node carrying its pullback.
struct Node {
  Tensor value;
  Tensor grad;  // same shape as value once backward has run
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> pullback;  // accumulates into parents' grads
  bool requires_grad = true;
  std::string name;  // set on leaves, used in diagnostics
};

using NodePtr = std::shared_ptr<Node>;

inline NodePtr leaf(Tensor value, std::string name = "") {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->name = std::move(name);
  return n;
}

inline NodePtr constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  return n;
}

inline NodePtr constant(double v) { return constant(Tensor::scalar(v)); }

inline NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                         std::function<void(Node&)> pullback) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->pullback = std::move(pullback);
  bool any = false;
  for (const auto& p : n->parents) any = any || p->requires_grad;
  n->requires_grad = any;
  return n;
}

inline void accumulate(Node& dst, const Tensor& g) {
  if (!dst.requires_grad) return;
  if (dst.grad.data.empty()) dst.grad = Tensor::zeros(dst.value.shape);
  for (std::size_t i = 0; i < g.data.size(); ++i) dst.grad.data[i] += g.data[i];
}

/// Reverse-mode sweep from a scalar loss. Gradients of all reachable nodes
/// are reset first, so repeated calls do not accumulate across graphs.
inline void backward(const NodePtr& loss) {
  if (!loss->value.is_scalar())
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                loss->value.shape_str());

  // Iterative post-order DFS for the topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad = Tensor::zeros(n->value.shape);
  loss->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->pullback && n->requires_grad) n->pullback(*n);
  }
}

}  // namespace slimnet

#endif  // SLIMNET_GRAPH_HPP
