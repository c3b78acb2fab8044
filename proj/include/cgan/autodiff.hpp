#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

// Reverse-mode autodiff on a dynamically built graph.
//
// Determinism contract: node ids increase monotonically in creation order, a
// single thread builds any given graph, and backward() visits nodes in strictly
// descending id order. Creation order is a valid topological order, so the
// reverse sweep sees every consumer before its producers and gradient
// accumulation happens in a fixed, reproducible order.

inline std::atomic<uint64_t>& node_counter() {
  static std::atomic<uint64_t> c{0};
  return c;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <class T>
struct Node {
  uint64_t id = 0;
  Tensor<T> val;
  Tensor<T> grad;               // allocated lazily, same shape as val
  bool grad_alloc = false;
  bool needs_grad = false;        // participates in differentiation
  bool leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor<T>(val.shape);
      grad_alloc = true;
    }
  }
  void zero_grad() {
    if (grad_alloc) grad.fill(T(0));
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->id = node_counter().fetch_add(1);
    n->val = std::move(value);
    n->needs_grad = requires_grad;
    n->leaf = true;
    return Var(std::move(n));
  }

  static Var param(Tensor<T> value) { return leaf(std::move(value), true); }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool defined() const { return static_cast<bool>(n_); }
  Node<T>& node() const { return *n_; }
  const std::shared_ptr<Node<T>>& ptr() const { return n_; }

  Tensor<T>& val() const { return n_->val; }
  Tensor<T>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  bool requires_grad() const { return n_->needs_grad; }
  void set_requires_grad(bool r) const {
    if (!n_->leaf) throw std::runtime_error("autodiff: requires_grad is only togglable on leaves");
    n_->needs_grad = r;
  }
  const std::vector<int64_t>& shape() const { return n_->val.shape; }
  int64_t numel() const { return n_->val.numel(); }
  void zero_grad() const { n_->zero_grad(); }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
void collect(Node<T>* root, std::vector<Node<T>*>& order,
             std::unordered_set<Node<T>*>& seen) {
  std::vector<Node<T>*> stack{root};
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
}

}  // namespace detail

// Backpropagate from a scalar root. `seed` scales the whole gradient, which is
// how callers fold constant loss prefactors in without extra graph nodes.
template <class T>
void backward(const Var<T>& root, T seed = T(1)) {
  if (root.numel() != 1) throw std::runtime_error("backward: root must be scalar");
  Node<T>* r = root.ptr().get();
  if (!r->needs_grad) throw std::runtime_error("backward: root does not require grad");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  detail::collect(r, order, seen);
  std::sort(order.begin(), order.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->id > b->id; });
  r->ensure_grad();
  r->grad.v[0] += seed;
  for (Node<T>* n : order) {
    if (n->backprop && n->needs_grad && n->grad_alloc) n->backprop();
  }
}

}  // namespace cgan
