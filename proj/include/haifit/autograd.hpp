#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "haifit/tensor.hpp"

namespace haifit {

/// Thread-local switch for graph recording. Evaluation code runs under a
/// NoGradGuard so concurrent forwards over shared parameters never touch
/// shared mutable state.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set_enabled(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<Scalar>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.shape() == value.shape() && !grad.empty(); }
  Node& parent(std::size_t i) { return *parents[i]; }
};

/// Handle to a value in the autodiff graph. Copies share the node.
template <typename Scalar_>
class Var {
 public:
  using Scalar = Scalar_;
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  /// Builds an op result. The backward function is only retained when grad
  /// mode is on and at least one parent needs a gradient.
  static Var make(Tensor<Scalar> value, std::initializer_list<Var> parents,
                  std::function<void(NodeType&)> backward) {
    return make(std::move(value), std::vector<Var>(parents), std::move(backward));
  }
  static Var make(Tensor<Scalar> value, const std::vector<Var>& parents,
                  std::function<void(NodeType&)> backward) {
    Var out(std::move(value));
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward);
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) const { node_->requires_grad = on; }

  bool has_grad() const { return node_->has_grad(); }
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  void zero_grad() const {
    if (node_->has_grad()) node_->grad.vec().setZero();
  }

  Scalar item() const {
    if (value().size() != 1) throw Error(ErrorKind::Shape, "item() on non-scalar " + to_string(shape()));
    return value()[0];
  }

  Var detach() const { return Var(node_->value); }

  NodeType* node() const { return node_.get(); }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires one.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root.value().size() != 1) throw Error(ErrorKind::Shape, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().vec().setConstant(Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
  }
}

}  // namespace haifit
