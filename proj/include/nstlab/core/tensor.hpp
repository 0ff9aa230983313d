#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nstlab::core {

using Shape = std::vector<std::size_t>;

// Raised when an operation's preconditions (shapes, ranges, sizes) do not hold.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an op produces NaN or Inf. Non-finite values are never
// propagated through the graph.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor. Plain value type; autodiff lives in Var.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
      throw ContractViolation("tensor data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_string(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() < 2 ? 1 : data.size() / shape.at(0); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool operator==(const Tensor&) const = default;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

// Throws NonFiniteError naming `where` if any entry is NaN or Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const char* where);

}  // namespace nstlab::core
