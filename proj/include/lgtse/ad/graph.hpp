#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "lgtse/common/tensor.hpp"

namespace lgtse::ad {

// Reverse-mode autodiff over Tensor<T>. Graphs are built per forward pass;
// parameter leaves persist across passes and accumulate gradients, which is
// how batches are averaged (backward with seed 1/N per item).
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() {
    if (grad.size() == value.size()) grad.fill(T(0));
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Tensor<T> v, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<T>& val() const { return n_->value; }
  Tensor<T>& mutable_val() { return n_->value; }
  Tensor<T>& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return n_; }
  void zero_grad() { n_->zero_grad(); }

  // Value-sharing constant view; cuts the graph at this point.
  Var detach() const { return constant(n_->value); }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
void topo_sort(Node<T>* root, std::vector<Node<T>*>& order) {
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Accumulates seed * d(root)/d(leaf) into every reachable leaf's grad.
template <class T>
void backward(const Var<T>& root, T seed = T(1)) {
  Node<T>* r = root.node().get();
  if (!r->requires_grad) return;
  Tensor<T>& g = r->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed;

  std::vector<Node<T>*> order;
  detail::topo_sort(r, order);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn();
  }
}

// Node factory used by every op: parents without requires_grad are dropped so
// inference-mode graphs carry no backward machinery.
template <class T, class Fn>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, Fn&& make_backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs)
    if (in.node()->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = make_backward(n.get());
  }
  return Var<T>(std::move(n));
}

}  // namespace lgtse::ad
