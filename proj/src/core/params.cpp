#include "nstlab/core/params.hpp"

namespace nstlab::core {

template <typename T>
void ParameterSet<T>::add(std::string name, Tensor<T> value, bool frozen) {
  if (index_.count(name)) throw ContractViolation("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value), frozen});
}

template <typename T>
bool ParameterSet<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

template <typename T>
std::size_t ParameterSet<T>::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractViolation("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParameterSet<T>::at(std::string_view name) {
  return entries_[index_of(name)].value;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(std::string_view name) const {
  return entries_[index_of(name)].value;
}

template <typename T>
void ParameterSet<T>::set_frozen(std::string_view name, bool frozen) {
  entries_[index_of(name)].frozen = frozen;
}

template <typename T>
void ParameterSet<T>::freeze_prefix(std::string_view prefix, bool frozen) {
  for (auto& e : entries_)
    if (std::string_view(e.name).substr(0, prefix.size()) == prefix) e.frozen = frozen;
}

template <typename T>
std::size_t ParameterSet<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
bool ParameterSet<T>::operator==(const ParameterSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = o.entries_[i];
    if (a.name != b.name || a.frozen != b.frozen || !(a.value == b.value)) return false;
  }
  return true;
}

template <typename T>
ParamVars<T>::ParamVars(const ParameterSet<T>& set, bool track_grad) : set_(&set) {
  leaves_.reserve(set.count());
  for (const auto& e : set.entries()) leaves_.push_back(Var<T>::leaf(e.value, track_grad && !e.frozen));
}

template <typename T>
const Var<T>& ParamVars<T>::operator[](std::string_view name) const {
  return leaves_[set_->index_of(name)];
}

template <typename T>
bool ParamVars<T>::contains(std::string_view name) const {
  return set_->contains(name);
}

template <typename T>
std::vector<Tensor<T>> ParamVars<T>::gradients() const {
  std::vector<Tensor<T>> out;
  out.reserve(leaves_.size());
  for (const auto& l : leaves_) out.push_back(l.grad());
  return out;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class ParamVars<float>;
template class ParamVars<double>;

}  // namespace nstlab::core
