#pragma once

#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nstlab/core/var.hpp"

namespace nstlab::core {

// Ordered collection of named parameter tensors. Insertion order is the
// canonical order for serialization and gradient vectors.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool frozen = false;
  };

  void add(std::string name, Tensor<T> value, bool frozen = false);
  bool contains(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  void set_frozen(std::string_view name, bool frozen);
  // Freezes every parameter whose name starts with `prefix`.
  void freeze_prefix(std::string_view prefix, bool frozen = true);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& e : entries_) out.add(e.name, core::cast<U>(e.value), e.frozen);
    return out;
  }

  bool operator==(const ParameterSet& o) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Graph leaves for one forward pass over a ParameterSet. Frozen entries are
// leaves without gradient; with track_grad = false no entry records a graph.
template <typename T>
class ParamVars {
 public:
  explicit ParamVars(const ParameterSet<T>& set, bool track_grad = true);

  const Var<T>& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::vector<Var<T>>& leaves() const { return leaves_; }
  // Per-parameter gradients in ParameterSet order after backward().
  std::vector<Tensor<T>> gradients() const;

 private:
  const ParameterSet<T>* set_;
  std::vector<Var<T>> leaves_;
};

}  // namespace nstlab::core
