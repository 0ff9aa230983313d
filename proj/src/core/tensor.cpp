#include "nstlab/core/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nstlab::core {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      std::ostringstream os;
      os << "non-finite value " << t.data[i] << " at flat index " << i << " of " << where
         << " output " << shape_string(t.shape);
      throw NonFiniteError(os.str());
    }
  }
}

template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);

}  // namespace nstlab::core
