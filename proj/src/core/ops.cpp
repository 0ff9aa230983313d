#include "nstlab/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nstlab::core {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

// Number of times `b` repeats over `a` when broadcasting a trailing suffix.
std::size_t broadcast_outer(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return 1;
  bool ok = b.size() <= a.size() && !b.empty();
  for (std::size_t i = 0; ok && i < b.size(); ++i) ok = a[a.size() - b.size() + i] == b[i];
  require(ok, std::string(op) + ": cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
  return numel(a) / numel(b);
}

template <typename T>
void require_matrix(const Var<T>& a, const char* op) {
  require(a.shape().size() == 2, std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) {
    T z = std::exp(-x);
    return T{1} / (T{1} + z);
  }
  T z = std::exp(x);
  return z / (T{1} + z);
}

}  // namespace

double logsumexp2(double a, double b) {
  double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp(std::span<const double> values) {
  require(!values.empty(), "logsumexp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  std::size_t outer = broadcast_outer(a.shape(), b.shape(), "add");
  std::size_t inner = b.size();
  Tensor<T> out = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] += b.value().data[i];
  return make_op<T>("add", std::move(out), {a, b}, [outer, inner](Node<T>& n) {
    if (n.parent(0).requires_grad) {
      auto& ga = n.parent(0).grad_buffer();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    }
    if (n.parent(1).requires_grad) {
      auto& gb = n.parent(1).grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += n.grad[o * inner + i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  std::size_t outer = broadcast_outer(a.shape(), b.shape(), "sub");
  std::size_t inner = b.size();
  Tensor<T> out = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] -= b.value().data[i];
  return make_op<T>("sub", std::move(out), {a, b}, [outer, inner](Node<T>& n) {
    if (n.parent(0).requires_grad) {
      auto& ga = n.parent(0).grad_buffer();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    }
    if (n.parent(1).requires_grad) {
      auto& gb = n.parent(1).grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] -= n.grad[o * inner + i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  std::size_t outer = broadcast_outer(a.shape(), b.shape(), "mul");
  std::size_t inner = b.size();
  Tensor<T> out = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] *= b.value().data[i];
  return make_op<T>("mul", std::move(out), {a, b}, [outer, inner](Node<T>& n) {
    const auto& av = n.parent(0).value.data;
    const auto& bv = n.parent(1).value.data;
    if (n.parent(0).requires_grad) {
      auto& ga = n.parent(0).grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) ga[o * inner + i] += n.grad[o * inner + i] * bv[i];
    }
    if (n.parent(1).requires_grad) {
      auto& gb = n.parent(1).grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += n.grad[o * inner + i] * av[o * inner + i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  Tensor<T> out = a.value();
  T f = static_cast<T>(s);
  for (auto& x : out.data) x *= f;
  return make_op<T>("scale", std::move(out), {a}, [f](Node<T>& n) {
    auto& ga = n.parent(0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * f;
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data) x = stable_sigmoid(x);
  return make_op<T>("sigmoid", std::move(out), {a}, [](Node<T>& n) {
    auto& ga = n.parent(0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      T y = n.value.data[i];
      ga[i] += n.grad[i] * y * (T{1} - y);
    }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data) x = std::tanh(x);
  return make_op<T>("tanh", std::move(out), {a}, [](Node<T>& n) {
    auto& ga = n.parent(0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      T y = n.value.data[i];
      ga[i] += n.grad[i] * (T{1} - y * y);
    }
  });
}

template <typename T>
Var<T> swish(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data) x = x * stable_sigmoid(x);
  return make_op<T>("swish", std::move(out), {a}, [](Node<T>& n) {
    const auto& xv = n.parent(0).value.data;
    auto& ga = n.parent(0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      T s = stable_sigmoid(xv[i]);
      ga[i] += n.grad[i] * (s + xv[i] * s * (T{1} - s));
    }
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data) x = x * x;
  return make_op<T>("square", std::move(out), {a}, [](Node<T>& n) {
    const auto& xv = n.parent(0).value.data;
    auto& ga = n.parent(0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * T{2} * xv[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra

namespace {

// c[M,N] += a[M,K] * b[K,N]; each c[i,j] accumulates over k in order.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[M,N] += a[M,K] * b[N,K]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// c[K,N] += a[M,K]^T * b[M,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = a[i * k + p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner dimension mismatch " + shape_string(a.shape()) + " x " +
                                 shape_string(b.shape()));
  Tensor<T> out({m, n});
  gemm_nn(a.value().data.data(), b.value().data.data(), out.data.data(), m, k, n);
  return make_op<T>("matmul", std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    const T* g = node.grad.data();
    if (node.parent(0).requires_grad) {
      // dA = G * B^T
      gemm_nt(g, node.parent(1).value.data.data(), node.parent(0).grad_buffer().data(), m, n, k);
    }
    if (node.parent(1).requires_grad) {
      // dB = A^T * G
      gemm_tn(node.parent(0).value.data.data(), g, node.parent(1).grad_buffer().data(), m, k, n);
    }
  });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  require(b.shape()[1] == k, "matmul_nt: inner dimension mismatch " + shape_string(a.shape()) +
                                 " x " + shape_string(b.shape()) + "^T");
  Tensor<T> out({m, n});
  gemm_nt(a.value().data.data(), b.value().data.data(), out.data.data(), m, k, n);
  return make_op<T>("matmul_nt", std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    const T* g = node.grad.data();
    if (node.parent(0).requires_grad) {
      // dA = G * B
      gemm_nn(g, node.parent(1).value.data.data(), node.parent(0).grad_buffer().data(), m, n, k);
    }
    if (node.parent(1).requires_grad) {
      // dB = G^T * A
      gemm_tn(g, node.parent(0).value.data.data(), node.parent(1).grad_buffer().data(), m, n, k);
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  return add(matmul(x, w), bias);
}

// ---------------------------------------------------------------------------
// shape and indexing

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  require(numel(shape) == a.size(), "reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  Tensor<T> out(std::move(shape), a.value().data);
  return make_op<T>("reshape", std::move(out), {a}, [](Node<T>& n) {
    auto& ga = n.parent(0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_cols");
  std::size_t m = a.shape()[0], n = a.shape()[1];
  require(begin + count <= n, "slice_cols: range out of bounds");
  Tensor<T> out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.value().data.begin() + i * n + begin, count, out.data.begin() + i * count);
  return make_op<T>("slice_cols", std::move(out), {a}, [m, n, begin, count](Node<T>& node) {
    auto& ga = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += node.grad[i * count + j];
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  std::size_t m = parts[0].shape().at(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    require(p.shape()[0] == m, "concat_cols: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor<T> out({m, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].value().data.begin() + i * widths[k], widths[k],
                  out.data.begin() + i * total + offset);
    offset += widths[k];
  }
  return make_op<T>("concat_cols", std::move(out), parts, [m, total, widths](Node<T>& node) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (node.parent(k).requires_grad) {
        auto& gp = node.parent(k).grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += node.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count) {
  require(!a.shape().empty() && begin + count <= a.shape()[0], "slice_rows: range out of bounds");
  std::size_t w = a.cols();
  Shape shape = a.shape();
  shape[0] = count;
  Tensor<T> out(shape);
  std::copy_n(a.value().data.begin() + begin * w, count * w, out.data.begin());
  return make_op<T>("slice_rows", std::move(out), {a}, [begin, w](Node<T>& node) {
    auto& ga = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < node.grad.size(); ++i) ga[begin * w + i] += node.grad[i];
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Shape shape = parts[0].shape();
  require(!shape.empty(), "concat_rows: scalar input");
  std::size_t w = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.shape().size() == shape.size() && p.cols() == w, "concat_rows: trailing shape mismatch");
    rows += p.shape()[0];
  }
  shape[0] = rows;
  Tensor<T> out(shape);
  std::size_t offset = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + offset);
    offset += p.size();
    sizes.push_back(p.size());
  }
  return make_op<T>("concat_rows", std::move(out), parts, [sizes](Node<T>& node) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (node.parent(k).requires_grad) {
        auto& gp = node.parent(k).grad_buffer();
        for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += node.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  std::size_t v = table.shape()[0], d = table.shape()[1];
  for (std::size_t id : ids) require(id < v, "gather_rows: index " + std::to_string(id) + " out of range");
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  Tensor<T> out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(table.value().data.begin() + idx[i] * d, d, out.data.begin() + i * d);
  return make_op<T>("gather_rows", std::move(out), {table}, [idx, d](Node<T>& node) {
    auto& gt = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += node.grad[i * d + j];
  });
}

template <typename T>
Var<T> scatter_rows(const Var<T>& base, std::span<const std::size_t> ids, const Var<T>& src) {
  require_matrix(base, "scatter_rows");
  require_matrix(src, "scatter_rows");
  std::size_t m = base.shape()[0], d = base.shape()[1];
  require(src.shape()[1] == d && src.shape()[0] == ids.size(), "scatter_rows: source shape mismatch");
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<std::uint8_t> replaced(m, 0);
  for (std::size_t id : idx) {
    require(id < m, "scatter_rows: index out of range");
    require(!replaced[id], "scatter_rows: duplicate index");
    replaced[id] = 1;
  }
  Tensor<T> out = base.value();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.value().data.begin() + i * d, d, out.data.begin() + idx[i] * d);
  return make_op<T>("scatter_rows", std::move(out), {base, src}, [idx, replaced, d](Node<T>& node) {
    if (node.parent(0).requires_grad) {
      auto& gb = node.parent(0).grad_buffer();
      for (std::size_t r = 0; r < replaced.size(); ++r)
        if (!replaced[r])
          for (std::size_t j = 0; j < d; ++j) gb[r * d + j] += node.grad[r * d + j];
    }
    if (node.parent(1).requires_grad) {
      auto& gs = node.parent(1).grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gs[i * d + j] += node.grad[idx[i] * d + j];
    }
  });
}

template <typename T>
Var<T> gather_per_row(const Var<T>& a, std::span<const std::size_t> cols) {
  require_matrix(a, "gather_per_row");
  std::size_t m = a.shape()[0], n = a.shape()[1];
  require(m > 0 && cols.size() % m == 0, "gather_per_row: column list must be a multiple of rows");
  std::size_t k = cols.size() / m;
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  Tensor<T> out({m, k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      require(idx[i * k + j] < n, "gather_per_row: column out of range");
      out.data[i * k + j] = a.value().data[i * n + idx[i * k + j]];
    }
  return make_op<T>("gather_per_row", std::move(out), {a}, [idx, m, n, k](Node<T>& node) {
    auto& ga = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) ga[i * n + idx[i * k + j]] += node.grad[i * k + j];
  });
}

template <typename T>
Var<T> pick(const Var<T>& a, std::span<const std::size_t> idx) {
  require_matrix(a, "pick");
  std::size_t m = a.shape()[0], c = a.shape()[1];
  require(idx.size() == m, "pick: one index per row required");
  std::vector<std::size_t> ids(idx.begin(), idx.end());
  Tensor<T> out({m});
  for (std::size_t i = 0; i < m; ++i) {
    require(ids[i] < c, "pick: index out of range");
    out.data[i] = a.value().data[i * c + ids[i]];
  }
  return make_op<T>("pick", std::move(out), {a}, [ids, c](Node<T>& node) {
    auto& ga = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i) ga[i * c + ids[i]] += node.grad[i];
  });
}

template <typename T>
Var<T> outer_add(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "outer_add");
  require_matrix(b, "outer_add");
  std::size_t t = a.shape()[0], u = b.shape()[0], j = a.shape()[1];
  require(b.shape()[1] == j, "outer_add: width mismatch");
  Tensor<T> out({t * u, j});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < u; ++k)
      for (std::size_t c = 0; c < j; ++c)
        out.data[(i * u + k) * j + c] = a.value().data[i * j + c] + b.value().data[k * j + c];
  return make_op<T>("outer_add", std::move(out), {a, b}, [t, u, j](Node<T>& node) {
    const auto& g = node.grad;
    if (node.parent(0).requires_grad) {
      auto& ga = node.parent(0).grad_buffer();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t k = 0; k < u; ++k)
          for (std::size_t c = 0; c < j; ++c) ga[i * j + c] += g[(i * u + k) * j + c];
    }
    if (node.parent(1).requires_grad) {
      auto& gb = node.parent(1).grad_buffer();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t k = 0; k < u; ++k)
          for (std::size_t c = 0; c < j; ++c) gb[k * j + c] += g[(i * u + k) * j + c];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T x : a.value().data) s += x;
  return make_op<T>("sum", Tensor<T>({1}, {s}), {a}, [](Node<T>& n) {
    auto& ga = n.parent(0).grad_buffer();
    for (auto& g : ga) g += n.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

template <typename T>
Var<T> sum_rows(const Var<T>& a) {
  require_matrix(a, "sum_rows");
  std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({m});
  for (std::size_t i = 0; i < m; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += a.value().data[i * n + j];
    out.data[i] = s;
  }
  return make_op<T>("sum_rows", std::move(out), {a}, [m, n](Node<T>& node) {
    auto& ga = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += node.grad[i];
  });
}

// ---------------------------------------------------------------------------
// normalization and distributions

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  require_matrix(x, "layer_norm");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  require(gamma.size() == n && beta.size() == n, "layer_norm: affine parameter size mismatch");
  // normalized values and 1/std per row, kept for the backward pass
  auto xhat = std::make_shared<std::vector<T>>(m * n);
  auto inv_std = std::make_shared<std::vector<T>>(m);
  Tensor<T> out({m, n});
  const auto& xv = x.value().data;
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    bool constant = std::all_of(row, row + n, [&](T v) { return v == row[0]; });
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      T c = constant ? T{0} : row[j] - mu;
      (*xhat)[i * n + j] = c;
      var += c * c;
    }
    var /= static_cast<T>(n);
    T is = T{1} / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      T h = (*xhat)[i * n + j] * is;
      (*xhat)[i * n + j] = h;
      out.data[i * n + j] = h * gamma.value().data[j] + beta.value().data[j];
    }
  }
  return make_op<T>("layer_norm", std::move(out), {x, gamma, beta}, [m, n, xhat, inv_std](Node<T>& node) {
    const auto& g = node.grad;
    const auto& gam = node.parent(1).value.data;
    if (node.parent(1).requires_grad) {
      auto& gg = node.parent(1).grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * (*xhat)[i * n + j];
    }
    if (node.parent(2).requires_grad) {
      auto& gb = node.parent(2).grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
    if (node.parent(0).requires_grad) {
      auto& gx = node.parent(0).grad_buffer();
      T inv_n = T{1} / static_cast<T>(n);
      for (std::size_t i = 0; i < m; ++i) {
        T sum_d = 0, sum_dh = 0;
        for (std::size_t j = 0; j < n; ++j) {
          T d = g[i * n + j] * gam[j];
          sum_d += d;
          sum_dh += d * (*xhat)[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          T d = g[i * n + j] * gam[j];
          gx[i * n + j] += (*inv_std)[i] * (d - inv_n * sum_d - (*xhat)[i * n + j] * inv_n * sum_dh);
        }
      }
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  require_matrix(x, "softmax_rows");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.value().data.data() + i * n;
    T mx = *std::max_element(row, row + n);
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += (out.data[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] /= s;
  }
  return make_op<T>("softmax_rows", std::move(out), {x}, [m, n](Node<T>& node) {
    auto& gx = node.parent(0).grad_buffer();
    const auto& y = node.value.data;
    for (std::size_t i = 0; i < m; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += node.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (node.grad[i * n + j] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& x) {
  require_matrix(x, "log_softmax_rows");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.value().data.data() + i * n;
    T mx = *std::max_element(row, row + n);
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    T lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = row[j] - lse;
  }
  return make_op<T>("log_softmax_rows", std::move(out), {x}, [m, n](Node<T>& node) {
    auto& gx = node.parent(0).grad_buffer();
    const auto& y = node.value.data;
    for (std::size_t i = 0; i < m; ++i) {
      T gs = 0;
      for (std::size_t j = 0; j < n; ++j) gs += node.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += node.grad[i * n + j] - std::exp(y[i * n + j]) * gs;
    }
  });
}

template <typename T>
Var<T> masked_softmax_rows(const Var<T>& x, std::span<const std::uint8_t> allowed) {
  require_matrix(x, "masked_softmax_rows");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  require(allowed.size() == m * n, "masked_softmax_rows: mask size mismatch");
  auto mask = std::make_shared<std::vector<std::uint8_t>>(allowed.begin(), allowed.end());
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.value().data.data() + i * n;
    const std::uint8_t* ok = mask->data() + i * n;
    bool any = false;
    T mx = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (ok[j] && (!any || row[j] > mx)) {
        mx = row[j];
        any = true;
      }
    if (!any) continue;
    T s = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (ok[j]) s += (out.data[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j)
      if (ok[j]) out.data[i * n + j] /= s;
  }
  return make_op<T>("masked_softmax_rows", std::move(out), {x}, [m, n, mask](Node<T>& node) {
    auto& gx = node.parent(0).grad_buffer();
    const auto& y = node.value.data;
    for (std::size_t i = 0; i < m; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j)
        if ((*mask)[i * n + j]) dot += node.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        if ((*mask)[i * n + j]) gx[i * n + j] += y[i * n + j] * (node.grad[i * n + j] - dot);
    }
  });
}

template <typename T>
Var<T> glu(const Var<T>& x) {
  require_matrix(x, "glu");
  std::size_t m = x.shape()[0], w = x.shape()[1];
  require(w % 2 == 0, "glu: width must be even");
  std::size_t n = w / 2;
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.data[i * n + j] = x.value().data[i * w + j] * stable_sigmoid(x.value().data[i * w + n + j]);
  return make_op<T>("glu", std::move(out), {x}, [m, n, w](Node<T>& node) {
    const auto& xv = node.parent(0).value.data;
    auto& gx = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        T a = xv[i * w + j];
        T s = stable_sigmoid(xv[i * w + n + j]);
        T g = node.grad[i * n + j];
        gx[i * w + j] += g * s;
        gx[i * w + n + j] += g * a * s * (T{1} - s);
      }
  });
}

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, double eps) {
  require_matrix(x, "l2_normalize_rows");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  auto norms = std::make_shared<std::vector<T>>(m);
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += x.value().data[i * n + j] * x.value().data[i * n + j];
    T norm = std::sqrt(s + static_cast<T>(eps));
    (*norms)[i] = norm;
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = x.value().data[i * n + j] / norm;
  }
  return make_op<T>("l2_normalize_rows", std::move(out), {x}, [m, n, norms](Node<T>& node) {
    auto& gx = node.parent(0).grad_buffer();
    const auto& y = node.value.data;
    for (std::size_t i = 0; i < m; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += node.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        gx[i * n + j] += (node.grad[i * n + j] - y[i * n + j] * dot) / (*norms)[i];
    }
  });
}

template <typename T>
Var<T> pairwise_sq_dist(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "pairwise_sq_dist");
  require_matrix(b, "pairwise_sq_dist");
  std::size_t m = a.shape()[0], d = a.shape()[1], c = b.shape()[0];
  require(b.shape()[1] == d, "pairwise_sq_dist: dimension mismatch");
  Tensor<T> out({m, c});
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        T diff = av[i * d + j] - bv[k * d + j];
        s += diff * diff;
      }
      out.data[i * c + k] = s;
    }
  return make_op<T>("pairwise_sq_dist", std::move(out), {a, b}, [m, d, c](Node<T>& node) {
    const auto& av = node.parent(0).value.data;
    const auto& bv = node.parent(1).value.data;
    bool ga_on = node.parent(0).requires_grad, gb_on = node.parent(1).requires_grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        T g = node.grad[i * c + k];
        if (g == T{0}) continue;
        for (std::size_t j = 0; j < d; ++j) {
          T diff = T{2} * g * (av[i * d + j] - bv[k * d + j]);
          if (ga_on) node.parent(0).grad_buffer()[i * d + j] += diff;
          if (gb_on) node.parent(1).grad_buffer()[k * d + j] -= diff;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// sequence ops

std::size_t conv_right_context(std::size_t kernel, ConvPadding padding) {
  if (padding == ConvPadding::kCausal) return 0;
  return (kernel - 1) - (kernel - 1) / 2;
}

template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, ConvPadding padding) {
  require_matrix(x, "depthwise_conv1d");
  require_matrix(w, "depthwise_conv1d");
  std::size_t t = x.shape()[0], c = x.shape()[1], k = w.shape()[0];
  require(w.shape()[1] == c && bias.size() == c, "depthwise_conv1d: channel mismatch");
  require(k >= 1, "depthwise_conv1d: empty kernel");
  std::ptrdiff_t left = padding == ConvPadding::kCausal ? static_cast<std::ptrdiff_t>(k - 1)
                                                        : static_cast<std::ptrdiff_t>((k - 1) / 2);
  Tensor<T> out({t, c});
  const auto& xv = x.value().data;
  const auto& wv = w.value().data;
  for (std::size_t i = 0; i < t; ++i) {
    T* orow = out.data.data() + i * c;
    for (std::size_t ch = 0; ch < c; ++ch) orow[ch] = bias.value().data[ch];
    for (std::size_t j = 0; j < k; ++j) {
      std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(j) - left;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
      const T* xrow = xv.data() + static_cast<std::size_t>(src) * c;
      const T* wrow = wv.data() + j * c;
      for (std::size_t ch = 0; ch < c; ++ch) orow[ch] += wrow[ch] * xrow[ch];
    }
  }
  return make_op<T>("depthwise_conv1d", std::move(out), {x, w, bias}, [t, c, k, left](Node<T>& node) {
    const auto& xv = node.parent(0).value.data;
    const auto& wv = node.parent(1).value.data;
    const auto& g = node.grad;
    bool gx_on = node.parent(0).requires_grad, gw_on = node.parent(1).requires_grad;
    if (node.parent(2).requires_grad) {
      auto& gb = node.parent(2).grad_buffer();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += g[i * c + ch];
    }
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(j) - left;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
        auto s = static_cast<std::size_t>(src);
        for (std::size_t ch = 0; ch < c; ++ch) {
          if (gx_on) node.parent(0).grad_buffer()[s * c + ch] += g[i * c + ch] * wv[j * c + ch];
          if (gw_on) node.parent(1).grad_buffer()[j * c + ch] += g[i * c + ch] * xv[s * c + ch];
        }
      }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, Prng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  auto keep = std::make_shared<std::vector<T>>(x.size());
  T s = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = rng.bernoulli(p) ? T{0} : s;
    out.data[i] *= (*keep)[i];
  }
  return make_op<T>("dropout", std::move(out), {x}, [keep](Node<T>& node) {
    auto& gx = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i] * (*keep)[i];
  });
}

bool AttentionBand::allows(std::size_t query, std::size_t key) const {
  auto q = static_cast<long long>(query), k = static_cast<long long>(key);
  if (left >= 0 && k < q - left) return false;
  if (right >= 0 && k > q + right) return false;
  return true;
}

std::vector<std::uint8_t> band_mask(std::size_t length, AttentionBand band) {
  std::vector<std::uint8_t> mask(length * length, 0);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j < length; ++j) mask[i * length + j] = band.allows(i, j) ? 1 : 0;
  return mask;
}

template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                            AttentionBand band) {
  require_matrix(q, "multi_head_attention");
  require(q.shape() == k.shape() && q.shape() == v.shape(), "multi_head_attention: q/k/v shape mismatch");
  std::size_t t = q.shape()[0], d = q.shape()[1];
  require(heads >= 1 && d % heads == 0, "multi_head_attention: model dim not divisible by heads");
  std::size_t hd = d / heads;
  auto mask = band_mask(t, band);
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var<T> qh = heads == 1 ? q : slice_cols(q, h * hd, hd);
    Var<T> kh = heads == 1 ? k : slice_cols(k, h * hd, hd);
    Var<T> vh = heads == 1 ? v : slice_cols(v, h * hd, hd);
    Var<T> scores = scale(matmul_nt(qh, kh), inv_scale);
    Var<T> weights = masked_softmax_rows(scores, mask);
    outs.push_back(matmul(weights, vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

// ---------------------------------------------------------------------------

#define NSTLAB_INSTANTIATE(T)                                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                               \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                               \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                               \
  template Var<T> scale(const Var<T>&, double);                                                    \
  template Var<T> sigmoid(const Var<T>&);                                                          \
  template Var<T> tanh(const Var<T>&);                                                             \
  template Var<T> swish(const Var<T>&);                                                            \
  template Var<T> square(const Var<T>&);                                                           \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                         \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> reshape(const Var<T>&, Shape);                                                   \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                             \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                         \
  template Var<T> slice_rows(const Var<T>&, std::size_t, std::size_t);                             \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                         \
  template Var<T> gather_rows(const Var<T>&, std::span<const std::size_t>);                        \
  template Var<T> scatter_rows(const Var<T>&, std::span<const std::size_t>, const Var<T>&);        \
  template Var<T> gather_per_row(const Var<T>&, std::span<const std::size_t>);                     \
  template Var<T> pick(const Var<T>&, std::span<const std::size_t>);                               \
  template Var<T> outer_add(const Var<T>&, const Var<T>&);                                         \
  template Var<T> sum(const Var<T>&);                                                              \
  template Var<T> mean(const Var<T>&);                                                             \
  template Var<T> sum_rows(const Var<T>&);                                                         \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                 \
  template Var<T> softmax_rows(const Var<T>&);                                                     \
  template Var<T> log_softmax_rows(const Var<T>&);                                                 \
  template Var<T> masked_softmax_rows(const Var<T>&, std::span<const std::uint8_t>);               \
  template Var<T> glu(const Var<T>&);                                                              \
  template Var<T> l2_normalize_rows(const Var<T>&, double);                                        \
  template Var<T> pairwise_sq_dist(const Var<T>&, const Var<T>&);                                  \
  template Var<T> depthwise_conv1d(const Var<T>&, const Var<T>&, const Var<T>&, ConvPadding);      \
  template Var<T> dropout(const Var<T>&, double, Prng&);                                           \
  template Var<T> multi_head_attention(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,   \
                                       AttentionBand);

NSTLAB_INSTANTIATE(float)
NSTLAB_INSTANTIATE(double)

#undef NSTLAB_INSTANTIATE

}  // namespace nstlab::core
