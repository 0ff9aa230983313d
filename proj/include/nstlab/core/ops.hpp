#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nstlab/core/prng.hpp"
#include "nstlab/core/var.hpp"

namespace nstlab::core {

// log(sum(exp(values))) with max subtraction. Exact -inf when every entry is
// -inf. Empty input is a contract violation.
double logsumexp(std::span<const double> values);
double logsumexp2(double a, double b);

// ---- elementwise and broadcasting ------------------------------------------
// `b` either matches `a` exactly or matches a trailing suffix of a's shape,
// in which case it is broadcast over the leading dimensions.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, double s);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> swish(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);

// ---- linear algebra ---------------------------------------------------------
// [M,K] x [K,N] -> [M,N]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// [M,K] x [N,K]^T -> [M,N]
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
// x [M,K], w [K,N], bias [N]
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

// ---- shape and indexing -----------------------------------------------------
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t count);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
// Rows of `table` selected by `ids` (embedding lookup). Gradient scatters back.
template <typename T> Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids);
// Copy of `base` with rows `ids` replaced by the rows of `src`.
template <typename T>
Var<T> scatter_rows(const Var<T>& base, std::span<const std::size_t> ids, const Var<T>& src);
// out[i, j] = a[i, cols[i * k + j]] for a [M,N] and k = cols.size() / M.
template <typename T>
Var<T> gather_per_row(const Var<T>& a, std::span<const std::size_t> cols);
// a [M,C], idx [M] -> [M], out[i] = a[i, idx[i]]
template <typename T> Var<T> pick(const Var<T>& a, std::span<const std::size_t> idx);
// a [T,J], b [U,J] -> [T*U, J], row t*U+u = a[t] + b[u]
template <typename T> Var<T> outer_add(const Var<T>& a, const Var<T>& b);

// ---- reductions (sequential over the last axis) ----------------------------
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> sum_rows(const Var<T>& a);

// ---- normalization and distributions ----------------------------------------
// Per-row layer norm. Rows with zero variance normalize to exactly zero.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);
template <typename T> Var<T> softmax_rows(const Var<T>& x);
template <typename T> Var<T> log_softmax_rows(const Var<T>& x);
// `allowed` has one byte per element of x; disallowed entries get exactly zero
// probability and are never read. A fully disallowed row yields zeros.
template <typename T>
Var<T> masked_softmax_rows(const Var<T>& x, std::span<const std::uint8_t> allowed);
// x [M,2N] -> x[:, :N] * sigmoid(x[:, N:])
template <typename T> Var<T> glu(const Var<T>& x);
template <typename T> Var<T> l2_normalize_rows(const Var<T>& x, double eps = 1e-8);
// a [M,D], b [C,D] -> [M,C] squared Euclidean distances.
template <typename T> Var<T> pairwise_sq_dist(const Var<T>& a, const Var<T>& b);

// ---- sequence ops -------------------------------------------------------------
enum class ConvPadding { kCausal, kCentered };
// x [T,C], w [K,C], bias [C]; zero padding. Causal pads K-1 frames on the
// left; centered pads (K-1)/2 on the left and the remainder on the right.
template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, ConvPadding padding);
std::size_t conv_right_context(std::size_t kernel, ConvPadding padding);

// Inverted dropout driven by `rng`; identity when p == 0.
template <typename T> Var<T> dropout(const Var<T>& x, double p, Prng& rng);

// Band of attendable key positions for each query. Negative extents mean
// unbounded on that side; right = 0 gives a causal mask.
struct AttentionBand {
  int left = -1;
  int right = -1;
  bool allows(std::size_t query, std::size_t key) const;
};
std::vector<std::uint8_t> band_mask(std::size_t length, AttentionBand band);

// Multi-head scaled dot-product attention over already-projected q, k, v
// of shape [T,D]. D must divide evenly by `heads`.
template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                            AttentionBand band);

}  // namespace nstlab::core
