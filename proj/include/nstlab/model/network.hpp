#pragma once

#include <span>
#include <string>
#include <vector>

#include "nstlab/core/params.hpp"
#include "nstlab/core/prng.hpp"
#include "nstlab/model/spec.hpp"

namespace nstlab::model {

using core::ParameterSet;
using core::ParamVars;
using core::Tensor;
using core::Var;

// Random initialization. Each tensor draws from its own stream keyed by its
// name, so hydra heads and cascade blocks are initialized independently.
ParameterSet<float> init_params(const ModelSpec& spec, std::uint64_t seed);

// Parameter-name prefixes of the encoder stacks.
std::string trunk_block(std::size_t i);
std::string rnnt_block(std::size_t i);
std::string w2v_block(std::size_t i);
std::string cascade_block(std::size_t i);

struct EncodeOptions {
  // Projected-input positions replaced by the learned mask embedding.
  std::vector<std::size_t> mask_positions;
  // Heads to evaluate; a skipped head's output is left undefined.
  bool rnnt_head = true;
  bool w2v_head = true;
  // Residual-branch dropout; active only when `rng` is set.
  double dropout = 0.0;
  core::Prng* rng = nullptr;
};

template <typename T>
struct EncoderOutput {
  Var<T> projected;
  Var<T> rnnt;
  // Same node as `rnnt` when the hydra split has no private blocks.
  Var<T> w2v;
  // Second-pass output; defined only for cascaded specs.
  Var<T> second_pass;
};

template <typename T>
EncoderOutput<T> encode(const ModelSpec& spec, const ParamVars<T>& p, const Var<T>& input,
                        const EncodeOptions& options = {});

template <typename T>
Var<T> cascade_encode(const ModelSpec& spec, const ParamVars<T>& p, const Var<T>& causal_out, double dropout = 0.0,
                      core::Prng* rng = nullptr);

template <typename T>
struct LabelState {
  std::vector<Var<T>> h;
  std::vector<Var<T>> c;
};

template <typename T>
LabelState<T> initial_label_state(const ModelSpec& spec);

// One recurrent step on `token` (0 is the start symbol). Returns the projected
// output row [1, P] and advances `state`.
template <typename T>
Var<T> label_step(const ModelSpec& spec, const ParamVars<T>& p, LabelState<T>& state, int token);

// [U+1, P]; row u encodes tokens[0..u).
template <typename T>
Var<T> label_encode(const ModelSpec& spec, const ParamVars<T>& p, std::span<const int> tokens);

template <typename T>
Var<T> joint_enc_proj(const ParamVars<T>& p, const Var<T>& enc);
template <typename T>
Var<T> joint_pred_proj(const ParamVars<T>& p, const Var<T>& pred);
// Unnormalized joint outputs [T'*(U+1), V+1] from projected encoder rows
// [T',J] and projected label rows [U+1,J]; row t*(U+1)+u.
template <typename T>
Var<T> joint_logits(const ParamVars<T>& p, const Var<T>& enc_proj, const Var<T>& pred_proj);
// Per-row log-probabilities: log-softmax for rnnt, factorized blank/label for hat.
template <typename T>
Var<T> normalize_joint(JointKind kind, const Var<T>& logits);

// Column 0 is the blank logit: log P(blank) = log sigmoid(z0) and
// log P(v) = log(1 - sigmoid(z0)) + log_softmax(z[1:])[v-1].
template <typename T>
Var<T> hat_log_probs(const Var<T>& logits);

// Full joint: [T'*(U+1), V+1] log-probabilities.
template <typename T>
Var<T> joint(const ModelSpec& spec, const ParamVars<T>& p, const Var<T>& enc, const Var<T>& pred);

}  // namespace nstlab::model
