#include "dwcaps/autograd.hpp"

#include <unordered_set>

#include "dwcaps/linalg.hpp"
#include "dwcaps/tensor_ops.hpp"

namespace dwcaps {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
GradGraph<T>::GradGraph(const Var<T>& root) : root_(root) {
  if (!root.defined()) {
    throw ContractError("GradGraph: undefined root");
  }
  // Iterative post-order DFS; each node is appended once, after its parents.
  std::unordered_set<const VarNode<T>*> visited;
  std::vector<std::pair<std::shared_ptr<VarNode<T>>, std::size_t>> stack;
  if (root.node()->requires_grad) stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && visited.count(node.get())) {
      stack.pop_back();
      continue;
    }
    bool descended = false;
    while (next < node->parents.size()) {
      const auto& p = node->parents[next++];
      if (p->requires_grad && !visited.count(p.get())) {
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (descended) continue;
    if (!visited.count(node.get())) {
      visited.insert(node.get());
      topo_.push_back(node);
    }
    stack.pop_back();
  }
}

template <class T>
void GradGraph<T>::backward() {
  if (root_.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_to_string(root_.value().shape()));
  }
  if (topo_.empty()) return;  // nothing requires gradients
  auto& root = *root_.node();
  root.ensure_grad();
  root.grad[0] += T(1);
  for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
    VarNode<T>& node = **it;
    if (node.backward_fn) {
      node.ensure_grad();
      node.backward_fn(node);
    }
  }
}

template <class T>
std::vector<Var<T>> GradGraph<T>::trainable_leaves() const {
  std::vector<Var<T>> leaves;
  for (const auto& n : topo_) {
    if (n->trainable) leaves.push_back(Var<T>(n));
  }
  return leaves;
}

template <class T>
void backward(const Var<T>& loss) {
  GradGraph<T> graph(loss);
  graph.backward();
}

// ---- Recorded operations ------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make_node<T>(add(a.value(), b.value()), {a, b},
                      [](VarNode<T>& n) {
                        accumulate_grad(*n.parents[0], n.grad);
                        accumulate_grad(*n.parents[1], n.grad);
                      });
}

template <class T>
Var<T> subtract(const Var<T>& a, const Var<T>& b) {
  return make_node<T>(subtract(a.value(), b.value()), {a, b},
                      [](VarNode<T>& n) {
                        accumulate_grad(*n.parents[0], n.grad);
                        accumulate_grad(*n.parents[1], scaled(n.grad, T(-1)));
                      });
}

template <class T>
Var<T> multiply(const Var<T>& a, const Var<T>& b) {
  return make_node<T>(multiply(a.value(), b.value()), {a, b},
                      [](VarNode<T>& n) {
                        accumulate_grad(*n.parents[0],
                                        multiply(n.grad, n.parents[1]->value));
                        accumulate_grad(*n.parents[1],
                                        multiply(n.grad, n.parents[0]->value));
                      });
}

template <class T>
Var<T> scaled(const Var<T>& a, T factor) {
  return make_node<T>(scaled(a.value(), factor), {a},
                      [factor](VarNode<T>& n) {
                        accumulate_grad(*n.parents[0], scaled(n.grad, factor));
                      });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  Tensor<T> value({1});
  value[0] = sum(a.value());
  return make_node<T>(std::move(value), {a}, [](VarNode<T>& n) {
    auto& parent = *n.parents[0];
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    const T g = n.grad[0];
    for (std::int64_t i = 0; i < parent.grad.size(); ++i) parent.grad[i] += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scaled(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return make_node<T>(matmul(a.value(), b.value()), {a, b},
                      [](VarNode<T>& n) {
                        const auto& av = n.parents[0]->value;
                        const auto& bv = n.parents[1]->value;
                        if (n.parents[0]->requires_grad) {
                          accumulate_grad(*n.parents[0],
                                          matmul(n.grad, transposed(bv)));
                        }
                        if (n.parents[1]->requires_grad) {
                          accumulate_grad(*n.parents[1],
                                          matmul(transposed(av), n.grad));
                        }
                      });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return make_node<T>(relu(a.value()), {a}, [](VarNode<T>& n) {
    auto& parent = *n.parents[0];
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      if (parent.value[i] > T(0)) parent.grad[i] += n.grad[i];
    }
  });
}

template <class T>
Var<T> softmax(const Var<T>& a, std::int64_t axis) {
  Tensor<T> y = softmax(a.value(), axis);
  return make_node<T>(y, {a}, [axis](VarNode<T>& n) {
    auto& parent = *n.parents[0];
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    // dx = y * (dy - sum(dy * y)) per slice along `axis`.
    const auto& shape = n.value.shape();
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::int64_t i = axis + 1; i < n.value.rank(); ++i)
      inner *= shape[i];
    const std::int64_t len = shape[axis];
    const T* y = n.value.data();
    const T* dy = n.grad.data();
    T* dx = parent.grad.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * len * inner + in;
        T dot(0);
        for (std::int64_t l = 0; l < len; ++l) {
          const std::int64_t at = base + l * inner;
          dot += dy[at] * y[at];
        }
        for (std::int64_t l = 0; l < len; ++l) {
          const std::int64_t at = base + l * inner;
          dx[at] += y[at] * (dy[at] - dot);
        }
      }
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_node<T>(a.value().reshaped(std::move(shape)), {a},
                      [](VarNode<T>& n) {
                        accumulate_grad(
                            *n.parents[0],
                            n.grad.reshaped(n.parents[0]->value.shape()));
                      });
}

template <class T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b) {
  const auto& xv = x.value();
  const auto& bv = b.value();
  if (bv.rank() != 1 || bv.size() != xv.extent(xv.rank() - 1)) {
    throw ShapeError("bias_add: bias " + shape_to_string(bv.shape()) +
                     " does not match last axis of " +
                     shape_to_string(xv.shape()));
  }
  const std::int64_t c = bv.size();
  Tensor<T> out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + bv[i % c];
  return make_node<T>(std::move(out), {x, b}, [c](VarNode<T>& n) {
    accumulate_grad(*n.parents[0], n.grad);
    auto& bias = *n.parents[1];
    if (!bias.requires_grad) return;
    bias.ensure_grad();
    const T* g = n.grad.data();
    T* db = bias.grad.data();
    const std::int64_t rows = n.grad.size() / c;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < c; ++j) db[j] += g[r * c + j];
  });
}

#define DWCAPS_INSTANTIATE(T)                                      \
  template class GradGraph<T>;                                     \
  template void backward<T>(const Var<T>&);                        \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);            \
  template Var<T> subtract<T>(const Var<T>&, const Var<T>&);       \
  template Var<T> multiply<T>(const Var<T>&, const Var<T>&);       \
  template Var<T> scaled<T>(const Var<T>&, T);                     \
  template Var<T> sum<T>(const Var<T>&);                           \
  template Var<T> mean<T>(const Var<T>&);                          \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);         \
  template Var<T> relu<T>(const Var<T>&);                          \
  template Var<T> softmax<T>(const Var<T>&, std::int64_t);         \
  template Var<T> reshape<T>(const Var<T>&, Shape);                \
  template Var<T> bias_add<T>(const Var<T>&, const Var<T>&);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
