#include "nstlab/decode/greedy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "nstlab/core/ops.hpp"
#include "nstlab/model/network.hpp"

namespace nstlab::decode {

using core::ContractViolation;
using core::Var;

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kCausalOnly: return "causal_only";
    case DecodeMode::kCascaded: return "cascaded";
    case DecodeMode::kFull: return "full";
  }
  return "?";
}

DecodeMode decode_mode_from_string(const std::string& text) {
  if (text == "causal_only") return DecodeMode::kCausalOnly;
  if (text == "cascaded") return DecodeMode::kCascaded;
  if (text == "full") return DecodeMode::kFull;
  throw ContractViolation("unknown decode mode '" + text + "'");
}

DecodeMode default_decode_mode(const model::ModelSpec& spec) {
  if (spec.cascade && spec.cascade->extra_blocks > 0) return DecodeMode::kCascaded;
  return spec.encoder.causal ? DecodeMode::kCausalOnly : DecodeMode::kFull;
}

void check_decode_mode(const model::ModelSpec& spec, DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kCausalOnly:
      if (!spec.encoder.causal) throw ContractViolation("decode mode causal_only needs a causal encoder");
      break;
    case DecodeMode::kCascaded:
      if (!spec.cascade || spec.cascade->extra_blocks == 0)
        throw ContractViolation("decode mode cascaded needs a cascaded encoder");
      break;
    case DecodeMode::kFull:
      if (spec.encoder.causal) throw ContractViolation("decode mode full needs a non-causal encoder");
      break;
  }
}

double confidence(const Hypothesis& hyp) {
  const std::size_t steps = hyp.emission_logposts.size() + hyp.frame_blank_logposts.size();
  if (steps == 0) return 1.0;
  double sum = 0;
  for (double x : hyp.emission_logposts) sum += x;
  for (double x : hyp.frame_blank_logposts) sum += x;
  return std::clamp(std::exp(sum / static_cast<double>(steps)), 0.0, 1.0);
}

Hypothesis greedy_decode(const model::ModelSpec& spec, const core::ParameterSet<float>& params,
                         const core::Tensor<float>& input, const DecodeOptions& options) {
  const DecodeMode mode = options.mode.value_or(default_decode_mode(spec));
  check_decode_mode(spec, mode);
  if (options.max_symbols_per_frame == 0) throw ContractViolation("max_symbols_per_frame must be positive");
  if (input.rank() != 2 || input.dim(1) != spec.input_dim || input.dim(0) == 0) {
    throw ContractViolation("greedy_decode: input shape " + core::shape_string(input.shape) + " does not match model input width " +
                            std::to_string(spec.input_dim));
  }
  core::ParamVars<float> p(params, false);
  model::EncodeOptions eo;
  eo.w2v_head = false;
  auto enc = model::encode(spec, p, Var<float>::constant(input), eo);
  const Var<float>& features = mode == DecodeMode::kCascaded ? enc.second_pass : enc.rnnt;
  const Var<float> enc_proj = model::joint_enc_proj(p, features);
  const std::size_t frames = enc_proj.rows();

  Hypothesis hyp;
  auto state = model::initial_label_state<float>(spec);
  Var<float> pred_proj = model::joint_pred_proj(p, model::label_step(spec, p, state, 0));
  for (std::size_t t = 0; t < frames; ++t) {
    const Var<float> enc_row = core::slice_rows(enc_proj, t, 1);
    for (std::size_t emitted = 0; emitted < options.max_symbols_per_frame;) {
      auto logp = model::normalize_joint(spec.joint.kind, model::joint_logits(p, enc_row, pred_proj)).value();
      const auto best = static_cast<std::size_t>(std::max_element(logp.data.begin(), logp.data.end()) - logp.data.begin());
      const double lp = logp.data[best];
      hyp.total_logprob += lp;
      if (best == 0) {
        hyp.frame_blank_logposts.push_back(lp);
        break;
      }
      hyp.tokens.push_back(static_cast<int>(best));
      hyp.emission_logposts.push_back(lp);
      pred_proj = model::joint_pred_proj(p, model::label_step(spec, p, state, static_cast<int>(best)));
      ++emitted;
    }
  }
  hyp.confidence = confidence(hyp);
  return hyp;
}

Hypothesis greedy_decode(const model::Checkpoint& ckpt, const core::Tensor<float>& input, const DecodeOptions& options) {
  return greedy_decode(ckpt.spec, ckpt.params, input, options);
}

BatchDecode decode_all(const model::ModelSpec& spec, const core::ParameterSet<float>& params,
                       std::span<const core::Tensor<float>> inputs, const DecodeOptions& options, std::size_t threads) {
  BatchDecode out;
  out.hypotheses.resize(inputs.size());
  out.errors.resize(inputs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(inputs.size(), 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        out.hypotheses[i] = greedy_decode(spec, params, inputs[i], options);
      } catch (const std::exception& e) {
        out.errors[i] = e.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  return out;
}

}  // namespace nstlab::decode
