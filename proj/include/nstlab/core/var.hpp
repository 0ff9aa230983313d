#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nstlab/core/tensor.hpp"

namespace nstlab::core {

template <typename T>
struct Node {
  Tensor<T> value;
  // Gradient of the backward root with respect to `value`; allocated lazily.
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  const char* op = "leaf";

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

// Handle to a node in a reverse-mode graph. Values are immutable once
// produced; copying a Var shares the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value);
  static Var leaf(Tensor<T> value, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  T item() const;
  // Gradient accumulated by the last backward(); zeros when none reached it.
  Tensor<T> grad() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op result. Checks the value for non-finite entries, and keeps
// parents and the backward closure only if some parent requires a gradient.
template <typename T>
Var<T> make_op(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn);

// Reverse-mode sweep from a scalar root. Gradients accumulate into leaves.
template <typename T>
void backward(const Var<T>& root);

template <typename T>
Var<T> detach(const Var<T>& v) {
  return Var<T>::constant(v.value());
}

}  // namespace nstlab::core
