#pragma once

#include <span>
#include <vector>

#include "nstlab/core/prng.hpp"
#include "nstlab/core/var.hpp"

namespace nstlab::loss {

using core::Tensor;
using core::Var;

template <typename T>
struct QuantizeResult {
  std::vector<std::size_t> ids;
  // Codeword values; gradients pass straight through to the targets.
  Var<T> quantized;
  // Negative entropy of the batch soft-assignment histogram, in [-ln C, 0].
  Var<T> diversity;
};

// Nearest codeword by squared Euclidean distance, ties to the lowest index.
// The soft assignment used by the diversity term is softmax(-distance / temperature).
template <typename T>
QuantizeResult<T> quantize(const Tensor<T>& codebook, const Var<T>& targets, double temperature = 1.0);

// Moves each used codeword toward the mean of the targets assigned to it.
void ema_update_codebook(Tensor<float>& codebook, const Tensor<float>& targets, std::span<const std::size_t> ids,
                         double decay);

// For each of `count` masked positions, `k` distinct other positions drawn
// uniformly without replacement. Throws if count <= k.
std::vector<std::vector<std::size_t>> sample_distractors(std::size_t count, std::size_t k, core::Prng& rng);

// Contrastive loss over masked positions with within-utterance distractors.
// context and quantized are [T, D]; similarity is cosine / kappa.
template <typename T>
Var<T> contrastive_loss(const Var<T>& context, const Var<T>& quantized, std::span<const std::size_t> masked,
                        std::size_t k, double kappa, core::Prng& rng);

// Same loss with explicit distractor lists (indices into `masked`).
template <typename T>
Var<T> contrastive_loss(const Var<T>& context, const Var<T>& quantized, std::span<const std::size_t> masked,
                        const std::vector<std::vector<std::size_t>>& distractors, double kappa);

// Mean cross-entropy of a linear classifier over codeword ids at masked
// positions only.
template <typename T>
Var<T> masked_prediction_loss(const Var<T>& context, std::span<const std::size_t> target_ids,
                              std::span<const std::size_t> masked, const Var<T>& weight, const Var<T>& bias);

// Each position starts a span with probability `start_prob`; spans may
// overlap. Extra random starts are added until at least `min_count`
// positions are masked (capped at `length`). Sorted, unique.
std::vector<std::size_t> choose_mask(std::size_t length, std::size_t span, double start_prob, std::size_t min_count,
                                     core::Prng& rng);

}  // namespace nstlab::loss
