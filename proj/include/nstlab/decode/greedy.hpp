#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nstlab/core/params.hpp"
#include "nstlab/model/checkpoint.hpp"
#include "nstlab/model/spec.hpp"

namespace nstlab::decode {

using Tokens = std::vector<int>;

// Which encoder output feeds the decoder: the first (causal) pass of a
// streaming model, the second pass of a cascaded one, or the full-context
// encoder of a non-streaming model.
enum class DecodeMode { kCausalOnly, kCascaded, kFull };

std::string to_string(DecodeMode mode);
DecodeMode decode_mode_from_string(const std::string& text);
// Cascaded models decode their second pass, other causal models their first
// pass and non-causal models their full encoder.
DecodeMode default_decode_mode(const model::ModelSpec& spec);
// Throws ContractViolation if the model cannot run in `mode`.
void check_decode_mode(const model::ModelSpec& spec, DecodeMode mode);

struct Hypothesis {
  Tokens tokens;
  std::vector<double> emission_logposts;
  std::vector<double> frame_blank_logposts;
  double total_logprob = 0.0;
  double confidence = 0.0;

  bool operator==(const Hypothesis&) const = default;
};

// exp(mean of every step log-posterior, emissions and blanks alike).
double confidence(const Hypothesis& hyp);

struct DecodeOptions {
  std::optional<DecodeMode> mode;
  std::size_t max_symbols_per_frame = 4;
};

// At each frame, repeatedly take the argmax over blank and labels (lowest id
// on ties), emitting labels until a blank or max_symbols_per_frame, then move
// to the next frame. A frame left because of the symbol cap records no blank
// step.
Hypothesis greedy_decode(const model::ModelSpec& spec, const core::ParameterSet<float>& params,
                         const core::Tensor<float>& input, const DecodeOptions& options = {});
Hypothesis greedy_decode(const model::Checkpoint& ckpt, const core::Tensor<float>& input,
                         const DecodeOptions& options = {});

struct BatchDecode {
  // Empty entries mark utterances whose decode failed.
  std::vector<std::optional<Hypothesis>> hypotheses;
  std::vector<std::string> errors;
};

// Decodes independent inputs on up to `threads` workers; results are in input
// order and do not depend on the thread count. 0 uses the hardware count.
BatchDecode decode_all(const model::ModelSpec& spec, const core::ParameterSet<float>& params,
                       std::span<const core::Tensor<float>> inputs, const DecodeOptions& options = {},
                       std::size_t threads = 0);

}  // namespace nstlab::decode
