#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtlswin/tensor.hpp"

namespace mtlswin {

/// Reverse-mode autodiff over define-by-run graphs. Nodes hold the forward
/// value, a lazily allocated gradient buffer, and a closure that pushes this
/// node's gradient into its parents. Graphs are thread-confined.

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;
  uint64_t stamp = 0;

  Tensor<S>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<S>(value.shape(), S(0));
    return grad;
  }
};

template <typename S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<S>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t size() const { return node_->value.size(); }
  bool needs_grad() const { return node_->needs_grad; }

  /// Gradient accumulated by the latest backward pass (zeros if untouched).
  Tensor<S>& grad() const { return node_->ensure_grad(); }

  S item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }

  Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

/// Trainable (or frozen) tensor. The optimizer is the only writer of value;
/// backward passes accumulate into grad.
template <typename S>
struct Parameter {
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Tensor<S> v, bool trainable_ = true)
      : value(std::move(v)), grad(value.shape(), S(0)), trainable(trainable_) {}

  int64_t size() const { return value.size(); }
  void zero_grad() { grad.fill(S(0)); }
};

template <typename S>
Var<S> constant(Tensor<S> t) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(t);
  n->needs_grad = false;
  return Var<S>(n);
}

/// Graph leaf for a Parameter. Frozen parameters produce untracked leaves,
/// so no graph is retained behind them.
template <typename S>
Var<S> leaf(Parameter<S>& p) {
  auto n = std::make_shared<Node<S>>();
  n->value = p.value;
  n->needs_grad = grad_enabled() && p.trainable;
  if (n->needs_grad) {
    Node<S>* raw = n.get();
    Parameter<S>* pp = &p;
    n->backprop = [raw, pp]() { pp->grad.arr() += raw->ensure_grad().arr(); };
  }
  return Var<S>(n);
}

/// Tracked leaf not tied to a Parameter; gradients stay on the node.
template <typename S>
Var<S> input_leaf(Tensor<S> t) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(t);
  n->needs_grad = grad_enabled();
  return Var<S>(n);
}

/// Runs reverse-mode accumulation from a scalar root. Every reachable
/// trainable Parameter ends up holding dL/dtheta (added to its grad buffer).
template <typename S>
void backward(const Var<S>& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.size() != 1) {
    throw std::invalid_argument("backward: root has shape " + shape_str(root.shape()) + ", expected a scalar");
  }
  if (!std::isfinite(static_cast<double>(root.value()[0]))) {
    throw std::runtime_error("backward: non-finite value at graph root");
  }

  thread_local uint64_t stamp_source = 0;
  const uint64_t stamp = ++stamp_source;

  // Iterative post-order DFS; reversed post-order is a valid topological order.
  std::vector<Node<S>*> order;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  if (root.node()->needs_grad || root.node()->backprop) {
    root.node()->stamp = stamp;
    stack.emplace_back(root.node(), 0);
  }
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<S>* p = n->parents[i++].get();
      if (p->stamp != stamp && (p->needs_grad || p->backprop)) {
        p->stamp = stamp;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // NaN policy: the root is checked here; parameter gradients are checked by
  // the optimizer step, which touches every buffer anyway.
  root.node()->ensure_grad()[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop) n->backprop();
  }
}

}  // namespace mtlswin
