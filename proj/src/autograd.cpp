#include "ampn/autograd.hpp"

#include <unordered_set>

namespace ampn {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

namespace {

// Reverse topological order (root first), iterative DFS.
template <typename Scalar>
std::vector<Node<Scalar>*> topo_order(Node<Scalar>* root) {
  std::vector<Node<Scalar>*> post;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

}  // namespace

template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>& seed) {
  if (!root.requires_grad()) return;
  require_same_shape(root.shape(), seed.shape(), "backward seed");
  Node<Scalar>* r = root.node().get();
  r->grad_buffer().array() += seed.array();
  for (Node<Scalar>* node : topo_order(r)) {
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root.value().size() != 1) throw ShapeError("backward() without seed needs a scalar root");
  backward(root, Tensor<Scalar>(root.shape(), Scalar(1)));
}

template <typename Scalar>
void visit_graph(const Var<Scalar>& root, const std::function<void(const Node<Scalar>&)>& fn) {
  std::unordered_set<const Node<Scalar>*> seen;
  std::vector<const Node<Scalar>*> stack{root.node().get()};
  while (!stack.empty()) {
    const Node<Scalar>* n = stack.back();
    stack.pop_back();
    if (!n || !seen.insert(n).second) continue;
    fn(*n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);
template void backward<float>(const Var<float>&, const Tensor<float>&);
template void backward<double>(const Var<double>&, const Tensor<double>&);
template void visit_graph<float>(const Var<float>&, const std::function<void(const Node<float>&)>&);
template void visit_graph<double>(const Var<double>&,
                                  const std::function<void(const Node<double>&)>&);

}  // namespace ampn
