#pragma once

#include <span>

#include "nstlab/core/var.hpp"

namespace nstlab::loss {

using core::Tensor;
using core::Var;

// Forward/backward variables over the alignment trellis. Node (t, u) means t
// frames consumed and u labels emitted. Row t = frames is reachable only by
// the final blank, so alpha[frames, labels] is the total log-probability.
struct Lattice {
  std::size_t frames = 0;
  std::size_t labels = 0;
  Tensor<double> alpha;  // [frames + 1, labels + 1]
  Tensor<double> beta;   // [frames + 1, labels + 1]
  double log_prob_alpha = 0.0;
  double log_prob_beta = 0.0;
};

struct RnntResult {
  double loss = 0.0;
  // d loss / d log_probs, same shape as the input log-probabilities.
  Tensor<double> grad;
  Lattice lattice;
};

// log_probs [frames, labels + 1, V + 1] with blank at index 0; labels in [1, V].
RnntResult rnnt_loss(const Tensor<double>& log_probs, std::span<const int> labels);

struct RnntHatResult {
  double loss = 0.0;
  Tensor<double> grad_blank;   // [frames, labels + 1]
  Tensor<double> grad_labels;  // [frames, labels + 1, V]
  Lattice lattice;
};

// Same recursion with P(blank) from log_blank [frames, labels + 1] and
// P(label) from log_labels [frames, labels + 1, V].
RnntHatResult rnnt_loss_hat(const Tensor<double>& log_blank, const Tensor<double>& log_labels,
                            std::span<const int> labels);

// Differentiable form over joint output rows [frames * (labels + 1), V + 1].
template <typename T>
Var<T> rnnt_loss(const Var<T>& log_probs, std::size_t frames, std::span<const int> labels);

}  // namespace nstlab::loss
