#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nstlab/core/params.hpp"
#include "nstlab/core/prng.hpp"
#include "nstlab/model/spec.hpp"

namespace nstlab::loss {

using core::Tensor;
using core::Var;

struct JustWeights {
  double rnnt = 1.0;
  double contrastive = 1.0;
  double masked = 1.0;

  bool ssl_active() const { return contrastive > 0.0 || masked > 0.0; }
};

struct SslConfig {
  std::size_t mask_span = 3;
  double mask_prob = 0.065;
  std::size_t distractors = 4;
  double kappa = 0.1;
  double diversity_weight = 0.1;
  double assignment_temperature = 1.0;
};

template <typename T>
struct Example {
  // Stacked, domain-tagged model input [frames, input_dim].
  Tensor<T> input;
  std::optional<std::vector<int>> tokens;
};

template <typename T>
struct JustOutput {
  Var<T> total;
  // Weighted terms; each is a scalar (zero when inactive).
  Var<T> rnnt_term;
  Var<T> contrastive_term;
  Var<T> masked_term;
  Var<T> diversity_term;
  double rnnt = 0.0;
  double contrastive = 0.0;
  double masked = 0.0;
  double diversity = 0.0;
  std::size_t labeled = 0;
  std::size_t ssl_items = 0;
  // Unmasked-input targets and their codeword ids, for codebook updates.
  Tensor<T> targets;
  std::vector<std::size_t> target_ids;
};

// total = w_rnnt * mean RNN-T over labeled items (both passes averaged for
// cascaded specs) + w_contrastive * mean contrastive + w_masked * mean
// masked-prediction over items long enough to mask, + diversity_weight *
// batch codeword diversity whenever a self-supervised weight is positive.
// The RNN-T branch sees an unmasked forward pass; the self-supervised
// branch a separately masked one. Encoder dropout draws from `rng`.
template <typename T>
JustOutput<T> just_loss(const model::ModelSpec& spec, const core::ParamVars<T>& params,
                        std::span<const Example<T>> batch, const JustWeights& weights, const SslConfig& ssl,
                        core::Prng& rng, double dropout = 0.0);

// Per-utterance transducer loss on given encoder features.
template <typename T>
Var<T> transducer_loss(const model::ModelSpec& spec, const core::ParamVars<T>& params, const Var<T>& encoded,
                       std::span<const int> tokens);

}  // namespace nstlab::loss
