#pragma once

#include "ampn/tensor.hpp"

#include <functional>
#include <memory>
#include <string_view>
#include <vector>

namespace ampn {

template <typename Scalar>
struct Node;

/// Backward closure: receives the node whose `grad` is complete and pushes
/// contributions into its parents.
template <typename Scalar>
using BackwardFn = std::function<void(Node<Scalar>&)>;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // allocated lazily
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<Scalar> backward;
  bool requires_grad = false;
  std::string_view op = "leaf";

  Tensor<Scalar>& grad_buffer() {
    if (grad.empty() && value.size() > 0) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

/// Handle to a value in the reverse-mode graph. Copies share the node.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient accumulated by the last backward pass; zeros if none reached this node.
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  Tensor<Scalar>& grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.set_zero();
  }

  std::string_view op() const { return node_->op; }
  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

  /// Value-only copy cut from the graph.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

using VarF = Var<float>;
using VarD = Var<double>;

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

/// Creates an op result. Records `backward` only when a parent requires grad
/// and recording is enabled.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::string_view op,
                        std::vector<std::shared_ptr<Node<Scalar>>> parents,
                        BackwardFn<Scalar> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var<Scalar>(std::move(node));
}

/// Runs reverse-mode accumulation from a scalar (single-element) root.
template <typename Scalar>
void backward(const Var<Scalar>& root);

/// Same as backward() but seeds the root gradient with `seed` (same shape as root).
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>& seed);

/// Visits every node reachable from `root` (root first, then parents depth-first).
template <typename Scalar>
void visit_graph(const Var<Scalar>& root, const std::function<void(const Node<Scalar>&)>& fn);

}  // namespace ampn
