#ifndef DWCAPS_AUTOGRAD_HPP_
#define DWCAPS_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dwcaps/tensor.hpp"

namespace dwcaps {

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Each operation produces a node holding its value, references to its
// parents, and a closure that pushes the node's gradient into them. Leaves
// created with Var::leaf(..., trainable=true) accumulate gradients across
// backward passes until zero_grad() is called.

template <class T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool trainable = false;
  std::vector<std::shared_ptr<VarNode<T>>> parents;
  std::function<void(VarNode<T>&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<VarNode<T>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<T> value, bool trainable) {
    auto n = std::make_shared<VarNode<T>>();
    n->value = std::move(value);
    n->requires_grad = trainable;
    n->trainable = trainable;
    return Var(std::move(n));
  }

  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool trainable() const { return node_ && node_->trainable; }

  void zero_grad() {
    if (node_ && !node_->grad.empty()) {
      for (std::int64_t i = 0; i < node_->grad.size(); ++i)
        node_->grad[i] = T(0);
    }
  }

  const std::shared_ptr<VarNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<VarNode<T>> node_;
};

// Recording can be suspended (evaluation passes, routing iterations);
// while disabled, ops produce plain constants.
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

// Builds an op node. If no parent wants gradients (or recording is
// suspended) the parents and the closure are dropped, so inference-only
// computations never grow a graph.
template <class T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(VarNode<T>&)> backward_fn) {
  auto n = std::make_shared<VarNode<T>>();
  n->value = std::move(value);
  bool need = false;
  for (const auto& p : parents) need = need || p.requires_grad();
  need = need && grad_enabled();
  if (need) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

// Adds g into the parent's gradient (no-op for constants).
template <class T>
void accumulate_grad(VarNode<T>& parent, const Tensor<T>& g) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  T* dst = parent.grad.data();
  const T* src = g.data();
  for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

// The recorded computation reachable from one root, in topological order.
template <class T>
class GradGraph {
 public:
  explicit GradGraph(const Var<T>& root);

  // Seeds d(root)/d(root) = 1 and walks the graph once in reverse
  // topological order. The root must be scalar.
  void backward();

  std::vector<Var<T>> trainable_leaves() const;
  std::size_t node_count() const { return topo_.size(); }

 private:
  Var<T> root_;
  std::vector<std::shared_ptr<VarNode<T>>> topo_;  // parents before children
};

// One-shot convenience for loss.backward().
template <class T>
void backward(const Var<T>& loss);

// ---- Recorded operations ------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> subtract(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> multiply(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> scaled(const Var<T>& a, T factor);

template <class T>
Var<T> sum(const Var<T>& a);  // scalar, shape [1]

template <class T>
Var<T> mean(const Var<T>& a);

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> relu(const Var<T>& a);

template <class T>
Var<T> softmax(const Var<T>& a, std::int64_t axis);

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape);

// x + b with b broadcast along the last axis of x.
template <class T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b);

}  // namespace dwcaps

#endif  // DWCAPS_AUTOGRAD_HPP_
