#include "nstlab/loss/ssl.hpp"

#include <algorithm>
#include <cmath>

#include "nstlab/core/ops.hpp"

namespace nstlab::loss {

using core::ContractViolation;

namespace {

// sum_c h_c log h_c with h the column mean of a row-stochastic matrix.
template <typename T>
Var<T> histogram_neg_entropy(const Var<T>& assignment) {
  const std::size_t n = assignment.shape()[0], c = assignment.shape()[1];
  std::vector<double> h(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) h[j] += assignment.value().data[i * c + j];
  double value = 0.0;
  for (auto& x : h) {
    x /= static_cast<double>(n);
    if (x > 0) value += x * std::log(x);
  }
  return core::make_op<T>("histogram_neg_entropy", Tensor<T>({1}, static_cast<T>(value)), {assignment},
                          [n, c, h = std::move(h)](core::Node<T>& node) {
                            auto& g = node.parent(0).grad_buffer();
                            for (std::size_t j = 0; j < c; ++j) {
                              if (h[j] <= 0) continue;
                              const double d = node.grad[0] * (std::log(h[j]) + 1.0) / static_cast<double>(n);
                              for (std::size_t i = 0; i < n; ++i) g[i * c + j] += static_cast<T>(d);
                            }
                          });
}

// Forward value is the codewords; backward is the identity into targets.
template <typename T>
Var<T> straight_through(const Var<T>& targets, Tensor<T> codewords) {
  return core::make_op<T>("straight_through", std::move(codewords), {targets}, [](core::Node<T>& node) {
    auto& g = node.parent(0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
  });
}

}  // namespace

template <typename T>
QuantizeResult<T> quantize(const Tensor<T>& codebook, const Var<T>& targets, double temperature) {
  if (codebook.rank() != 2 || codebook.dim(0) == 0) throw ContractViolation("quantize: empty codebook");
  if (targets.shape().size() != 2 || targets.shape()[1] != codebook.dim(1))
    throw ContractViolation("quantize: target width does not match codebook");
  core::require_finite(targets.value(), "quantize targets");
  const std::size_t n = targets.shape()[0], c = codebook.dim(0), d = codebook.dim(1);
  QuantizeResult<T> r;
  Tensor<T> codewords({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(targets.value().data[i * d + j]) - codebook.data[k * d + j];
        dist += diff * diff;
      }
      if (k == 0 || dist < best_d) best = k, best_d = dist;
    }
    r.ids.push_back(best);
    std::copy_n(codebook.data.begin() + static_cast<std::ptrdiff_t>(best * d), d,
                codewords.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  r.quantized = straight_through(targets, std::move(codewords));
  auto dist = core::pairwise_sq_dist(targets, Var<T>::constant(codebook));
  r.diversity = histogram_neg_entropy(core::softmax_rows(core::scale(dist, -1.0 / temperature)));
  return r;
}

void ema_update_codebook(Tensor<float>& codebook, const Tensor<float>& targets, std::span<const std::size_t> ids,
                         double decay) {
  const std::size_t c = codebook.dim(0), d = codebook.dim(1);
  if (targets.dim(0) != ids.size() || targets.dim(1) != d) throw ContractViolation("ema_update_codebook: shape mismatch");
  std::vector<double> sums(c * d, 0.0);
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ++counts[ids[i]];
    for (std::size_t j = 0; j < d; ++j) sums[ids[i] * d + j] += targets.data[i * d + j];
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) continue;
    for (std::size_t j = 0; j < d; ++j) {
      const double mean = sums[k * d + j] / static_cast<double>(counts[k]);
      codebook.data[k * d + j] = static_cast<float>(decay * codebook.data[k * d + j] + (1.0 - decay) * mean);
    }
  }
}

std::vector<std::vector<std::size_t>> sample_distractors(std::size_t count, std::size_t k, core::Prng& rng) {
  if (count <= k)
    throw ContractViolation("contrastive loss needs more than " + std::to_string(k) + " masked positions, got " +
                            std::to_string(count) + "; use a larger mask or fewer distractors");
  std::vector<std::vector<std::size_t>> out(count);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < count; ++i) {
    pool.clear();
    for (std::size_t j = 0; j < count; ++j)
      if (j != i) pool.push_back(j);
    for (std::size_t s = 0; s < k; ++s) {
      std::size_t pick = s + static_cast<std::size_t>(rng.below(pool.size() - s));
      std::swap(pool[s], pool[pick]);
      out[i].push_back(pool[s]);
    }
  }
  return out;
}

template <typename T>
Var<T> contrastive_loss(const Var<T>& context, const Var<T>& quantized, std::span<const std::size_t> masked,
                        const std::vector<std::vector<std::size_t>>& distractors, double kappa) {
  if (masked.empty()) throw ContractViolation("contrastive_loss: no masked positions");
  if (context.shape() != quantized.shape()) throw ContractViolation("contrastive_loss: context/target shape mismatch");
  if (distractors.size() != masked.size()) throw ContractViolation("contrastive_loss: one distractor list per position");
  const std::size_t m = masked.size(), k = distractors.front().size();
  auto c = core::l2_normalize_rows(core::gather_rows(context, masked));
  auto q = core::l2_normalize_rows(core::gather_rows(quantized, masked));
  auto sim = core::matmul_nt(c, q);
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < m; ++i) {
    if (distractors[i].size() != k) throw ContractViolation("contrastive_loss: ragged distractor lists");
    cols.push_back(i);
    for (auto j : distractors[i]) {
      if (j >= m || j == i) throw ContractViolation("contrastive_loss: invalid distractor index");
      cols.push_back(j);
    }
  }
  auto logits = core::scale(core::gather_per_row(sim, cols), 1.0 / kappa);
  std::vector<std::size_t> positive(m, 0);
  return core::scale(core::mean(core::pick(core::log_softmax_rows(logits), positive)), -1.0);
}

template <typename T>
Var<T> contrastive_loss(const Var<T>& context, const Var<T>& quantized, std::span<const std::size_t> masked,
                        std::size_t k, double kappa, core::Prng& rng) {
  if (masked.empty()) throw ContractViolation("contrastive_loss: no masked positions");
  return contrastive_loss(context, quantized, masked, sample_distractors(masked.size(), k, rng), kappa);
}

template <typename T>
Var<T> masked_prediction_loss(const Var<T>& context, std::span<const std::size_t> target_ids,
                              std::span<const std::size_t> masked, const Var<T>& weight, const Var<T>& bias) {
  if (masked.empty()) throw ContractViolation("masked_prediction_loss: no masked positions");
  if (target_ids.size() != context.shape()[0]) throw ContractViolation("masked_prediction_loss: one id per frame");
  const std::size_t classes = weight.shape()[1];
  std::vector<std::size_t> ids;
  for (auto pos : masked) {
    if (pos >= target_ids.size()) throw ContractViolation("masked_prediction_loss: masked index out of range");
    if (target_ids[pos] >= classes) throw ContractViolation("masked_prediction_loss: target id out of range");
    ids.push_back(target_ids[pos]);
  }
  auto logits = core::linear(core::gather_rows(context, masked), weight, bias);
  return core::scale(core::mean(core::pick(core::log_softmax_rows(logits), ids)), -1.0);
}

std::vector<std::size_t> choose_mask(std::size_t length, std::size_t span, double start_prob, std::size_t min_count,
                                     core::Prng& rng) {
  std::vector<std::uint8_t> masked(length, 0);
  auto mark = [&](std::size_t start) {
    for (std::size_t i = start; i < std::min(length, start + span); ++i) masked[i] = 1;
  };
  for (std::size_t t = 0; t < length; ++t)
    if (rng.bernoulli(start_prob)) mark(t);
  const std::size_t target = std::min(min_count, length);
  auto count = [&] { return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), 1)); };
  while (count() < target) mark(static_cast<std::size_t>(rng.below(length)));
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < length; ++t)
    if (masked[t]) out.push_back(t);
  return out;
}

#define NSTLAB_INSTANTIATE(T)                                                                                    \
  template QuantizeResult<T> quantize(const Tensor<T>&, const Var<T>&, double);                                  \
  template Var<T> contrastive_loss(const Var<T>&, const Var<T>&, std::span<const std::size_t>, std::size_t,     \
                                   double, core::Prng&);                                                         \
  template Var<T> contrastive_loss(const Var<T>&, const Var<T>&, std::span<const std::size_t>,                  \
                                   const std::vector<std::vector<std::size_t>>&, double);                        \
  template Var<T> masked_prediction_loss(const Var<T>&, std::span<const std::size_t>,                           \
                                         std::span<const std::size_t>, const Var<T>&, const Var<T>&);

NSTLAB_INSTANTIATE(float)
NSTLAB_INSTANTIATE(double)

#undef NSTLAB_INSTANTIATE

}  // namespace nstlab::loss
