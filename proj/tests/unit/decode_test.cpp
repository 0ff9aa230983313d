#include <gtest/gtest.h>

#include <cmath>

#include "nstlab/core/ops.hpp"
#include "nstlab/decode/filter.hpp"
#include "nstlab/decode/greedy.hpp"
#include "nstlab/model/network.hpp"

namespace nstlab::decode {
namespace {

using core::Prng;
using core::Tensor;
using model::ModelSpec;

ModelSpec tiny_spec(std::size_t vocab, model::JointKind kind = model::JointKind::kRnnt) {
  ModelSpec s;
  s.input_dim = 10;
  s.domain_dims = 2;
  s.encoder = {.num_blocks = 2, .model_dim = 8, .conv_kernel = 3, .attn_heads = 2, .ffn_mult = 2,
               .attn_left_ctx = 2, .attn_right_ctx = 1, .causal = false};
  s.hydra = {2, 0, 0};
  s.label_encoder = {1, 6, 6};
  s.joint = {6, vocab, kind};
  s.ssl.enabled = false;
  return s;
}

Tensor<float> random_input(std::size_t frames, std::uint64_t seed) {
  Prng rng(seed, 3);
  Tensor<float> t({frames, 10});
  for (auto& x : t.data) x = static_cast<float>(rng.normal());
  return t;
}

// Step-by-step argmax trace that re-encodes the whole emitted prefix with the
// batched label encoder at every step instead of carrying recurrent state.
std::vector<int> replay_trace(const ModelSpec& spec, const core::ParameterSet<float>& params, const Tensor<float>& input,
                              std::size_t max_symbols) {
  core::ParamVars<float> p(params, false);
  auto enc = model::encode(spec, p, core::Var<float>::constant(input)).rnnt;
  std::vector<int> tokens;
  for (std::size_t t = 0; t < enc.rows(); ++t) {
    for (std::size_t n = 0; n < max_symbols; ++n) {
      auto pred = model::label_encode(spec, p, tokens);
      auto lp = model::joint(spec, p, core::slice_rows(enc, t, 1), pred).value();
      const std::size_t width = lp.dim(1), row = tokens.size();
      std::size_t best = 0;
      for (std::size_t k = 1; k < width; ++k)
        if (lp.at(row, k) > lp.at(row, best)) best = k;
      if (best == 0) break;
      tokens.push_back(static_cast<int>(best));
    }
  }
  return tokens;
}

TEST(GreedyDecode, MatchesTraceReplay) {
  const auto spec = tiny_spec(3);
  std::size_t nonempty = 0, capped = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto params = model::init_params(spec, seed);
    // Shift the blank bias so that traces range from all-blank to saturated.
    params.at("joint.out.b").data[0] = static_cast<float>(-2.0 + 0.1 * static_cast<double>(seed));
    auto input = random_input(3, 100 + seed);
    auto hyp = greedy_decode(spec, params, input, {.mode = std::nullopt, .max_symbols_per_frame = 2});
    EXPECT_EQ(hyp.tokens, replay_trace(spec, params, input, 2)) << "seed " << seed;
    EXPECT_EQ(hyp.tokens.size(), hyp.emission_logposts.size());
    EXPECT_LE(hyp.frame_blank_logposts.size(), 3u);
    nonempty += !hyp.tokens.empty();
    capped += hyp.frame_blank_logposts.size() < 3;
    double total = 0;
    for (double x : hyp.emission_logposts) total += x;
    for (double x : hyp.frame_blank_logposts) total += x;
    EXPECT_NEAR(hyp.total_logprob, total, 1e-9);
  }
  EXPECT_GT(nonempty, 0u);
  EXPECT_GT(capped, 0u);
}

TEST(GreedyDecode, HatJointMatchesTraceReplay) {
  const auto spec = tiny_spec(3, model::JointKind::kHat);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto params = model::init_params(spec, seed);
    params.at("joint.out.b").data[0] = -1.0f;
    auto input = random_input(4, 200 + seed);
    EXPECT_EQ(greedy_decode(spec, params, input).tokens, replay_trace(spec, params, input, 4));
  }
}

TEST(GreedyDecode, AllBlankModelGivesEmptyHypothesis) {
  const auto spec = tiny_spec(3);
  auto params = model::init_params(spec, 1);
  params.at("joint.out.b").data[0] = 50.0f;
  auto hyp = greedy_decode(spec, params, random_input(5, 1));
  EXPECT_TRUE(hyp.tokens.empty());
  EXPECT_EQ(hyp.frame_blank_logposts.size(), 5u);
  EXPECT_GE(hyp.confidence, 0.0);
  EXPECT_LE(hyp.confidence, 1.0);
  EXPECT_NEAR(hyp.confidence, 1.0, 1e-6);
}

TEST(GreedyDecode, DeterministicAcrossRunsAndThreads) {
  const auto spec = tiny_spec(4);
  auto params = model::init_params(spec, 9);
  params.at("joint.out.b").data[0] = -0.5f;
  std::vector<Tensor<float>> inputs;
  for (std::uint64_t i = 0; i < 12; ++i) inputs.push_back(random_input(2 + i % 5, i));
  EXPECT_EQ(greedy_decode(spec, params, inputs[3]), greedy_decode(spec, params, inputs[3]));
  auto serial = decode_all(spec, params, inputs, {}, 1);
  auto parallel = decode_all(spec, params, inputs, {}, 4);
  EXPECT_EQ(serial.hypotheses, parallel.hypotheses);
}

TEST(GreedyDecode, RejectsBadInputsAndModes) {
  const auto spec = tiny_spec(3);
  auto params = model::init_params(spec, 2);
  EXPECT_THROW(greedy_decode(spec, params, Tensor<float>({3, 9})), core::ContractViolation);
  EXPECT_THROW(greedy_decode(spec, params, random_input(3, 1), {.mode = DecodeMode::kCausalOnly}),
               core::ContractViolation);
  EXPECT_THROW(greedy_decode(spec, params, random_input(3, 1), {.mode = DecodeMode::kCascaded}),
               core::ContractViolation);
  std::vector<Tensor<float>> inputs{random_input(3, 1), Tensor<float>({2, 7})};
  auto batch = decode_all(spec, params, inputs);
  EXPECT_TRUE(batch.hypotheses[0].has_value());
  EXPECT_FALSE(batch.hypotheses[1].has_value());
  EXPECT_FALSE(batch.errors[1].empty());
}

TEST(GreedyDecode, CascadedStudentModes) {
  auto spec = tiny_spec(3);
  spec.encoder.causal = true;
  spec.encoder.attn_right_ctx = 0;
  spec.hydra = {2, 0, 0};
  spec.cascade = model::CascadeSpec{1, 2};
  auto params = model::init_params(spec, 5);
  EXPECT_EQ(default_decode_mode(spec), DecodeMode::kCascaded);
  auto input = random_input(6, 5);
  EXPECT_NO_THROW(greedy_decode(spec, params, input, {.mode = DecodeMode::kCausalOnly}));
  EXPECT_NO_THROW(greedy_decode(spec, params, input, {.mode = DecodeMode::kCascaded}));
  EXPECT_THROW(greedy_decode(spec, params, input, {.mode = DecodeMode::kFull}), core::ContractViolation);
}

TEST(Confidence, GeometricMeanOfSteps) {
  Hypothesis certain{{1, 2}, {0.0, 0.0}, {0.0}, 0.0, 0.0};
  EXPECT_EQ(confidence(certain), 1.0);
  for (std::size_t len : {1u, 3u, 17u}) {
    Hypothesis h;
    h.tokens.assign(len, 1);
    h.emission_logposts.assign(len, std::log(0.3));
    h.frame_blank_logposts.assign(2 * len, std::log(0.3));
    EXPECT_NEAR(confidence(h), 0.3, 1e-12);
  }
  Hypothesis empty;
  empty.frame_blank_logposts = {std::log(0.5), std::log(0.8)};
  EXPECT_NEAR(confidence(empty), std::sqrt(0.4), 1e-12);
}

synth::Manifest scored_manifest() {
  synth::Manifest m;
  m.header.feature_root = "/tmp";
  Prng rng(4, 4);
  for (int i = 0; i < 30; ++i) {
    synth::UtteranceRecord r;
    r.utt_id = "u" + std::to_string(i);
    r.feature_file = r.utt_id + ".nstf";
    r.num_frames = 10 + static_cast<std::size_t>(i);
    r.tokens = synth::Tokens{1};
    r.label_source = synth::LabelSource::kPseudo;
    r.confidence = rng.uniform();
    r.oracle_tokens = {1};
    m.records.push_back(r);
  }
  return m;
}

TEST(Filter, ThresholdEdgesAndMonotonicity) {
  auto m = scored_manifest();
  EXPECT_EQ(filter_manifest(m, 0.0).records, m.records);
  EXPECT_TRUE(filter_manifest(m, 1.0 + 1e-9).records.empty());
  std::vector<double> thresholds{0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.3, 0.5, 0.9, 0.99, 1.5};
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i) {
    auto loose = filter_manifest(m, thresholds[i]);
    auto strict = filter_manifest(m, thresholds[i + 1]);
    std::size_t j = 0;
    // Order-preserving subsequence check.
    for (const auto& r : loose.records)
      if (j < strict.records.size() && strict.records[j].utt_id == r.utt_id) ++j;
    EXPECT_EQ(j, strict.records.size());
    for (const auto& r : strict.records) EXPECT_GE(*r.confidence, thresholds[i + 1]);
  }
  auto sweep = filter_sweep(m, thresholds);
  for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
    EXPECT_GE(sweep[i].kept, sweep[i + 1].kept);
    EXPECT_GE(sweep[i].kept_hours, sweep[i + 1].kept_hours);
  }
}

TEST(Filter, MissingConfidenceIsAnError) {
  auto m = scored_manifest();
  m.records[7].confidence.reset();
  EXPECT_THROW(filter_manifest(m, 0.5), core::ContractViolation);
}

}  // namespace
}  // namespace nstlab::decode
