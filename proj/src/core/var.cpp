#include "nstlab/core/var.hpp"

#include <unordered_set>

namespace nstlab::core {

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

template <typename T>
T Var<T>::item() const {
  if (size() != 1) {
    throw ContractViolation("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value.data[0];
}

template <typename T>
Tensor<T> Var<T>::grad() const {
  Tensor<T> g(node_->value.shape);
  if (!node_->grad.empty()) g.data = node_->grad;
  return g;
}

template <typename T>
Var<T> make_op(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  require_finite(value, op);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.size() != 1) {
    throw ContractViolation("backward() requires a scalar root, got " + shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

template class Var<float>;
template class Var<double>;
template Var<float> make_op(const char*, Tensor<float>, std::vector<Var<float>>,
                            std::function<void(Node<float>&)>);
template Var<double> make_op(const char*, Tensor<double>, std::vector<Var<double>>,
                             std::function<void(Node<double>&)>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace nstlab::core
