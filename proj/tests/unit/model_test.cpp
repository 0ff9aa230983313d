#include <gtest/gtest.h>

#include <cmath>

#include "nstlab/core/grad_check.hpp"
#include "nstlab/loss/just.hpp"
#include "nstlab/model/checkpoint.hpp"
#include "nstlab/model/network.hpp"

namespace nstlab::model {
namespace {

using core::Prng;

ModelSpec tiny_spec() {
  ModelSpec s;
  s.input_dim = 10;
  s.domain_dims = 2;
  s.encoder = {.num_blocks = 2, .model_dim = 8, .conv_kernel = 3, .attn_heads = 2, .ffn_mult = 2,
               .attn_left_ctx = 2, .attn_right_ctx = 1, .causal = false};
  s.hydra = {1, 1, 1};
  s.label_encoder = {1, 6, 6};
  s.joint = {6, 4, JointKind::kRnnt};
  s.ssl = {true, 5, 3};
  return s;
}

ModelSpec tiny_student() {
  ModelSpec s = tiny_spec();
  s.encoder.causal = true;
  s.encoder.attn_right_ctx = 0;
  s.hydra = {2, 0, 0};
  s.cascade = CascadeSpec{2, 3};
  s.ssl.enabled = false;
  return s;
}

template <typename T>
Tensor<T> random_input(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  Prng rng(seed, 77);
  Tensor<T> t({frames, dim});
  for (auto& x : t.data) x = static_cast<T>(rng.normal());
  return t;
}

TEST(Spec, ParameterCountMatchesInitialization) {
  std::vector<ModelSpec> specs = {teacher_spec(36, 4, 32), student_spec(36, 4, 32), tiny_spec(), tiny_student()};
  auto hat = tiny_spec();
  hat.joint.kind = JointKind::kHat;
  hat.label_encoder.layers = 2;
  specs.push_back(hat);
  for (const auto& s : specs) EXPECT_EQ(parameter_count(s), init_params(s, 3).total_size());
}

TEST(Spec, DeskDefaultsAndInvariants) {
  auto t = teacher_spec(36, 4, 32);
  EXPECT_EQ(t.encoder.num_blocks, 3u);
  EXPECT_EQ(t.hydra.shared_blocks, 2u);
  EXPECT_EQ(t.encoder.model_dim, 32u);
  auto bad = t;
  bad.hydra.w2v_private_blocks = 2;
  EXPECT_THROW(bad.validate(), core::ContractViolation);
  bad = t;
  bad.hydra.shared_blocks = 5;
  EXPECT_THROW(bad.validate(), core::ContractViolation);
  auto s = student_spec(36, 4, 32);
  EXPECT_EQ(s.cascade_right_contexts(), (std::vector<int>{2}));
  EXPECT_EQ(s.encoder_lookahead(), 0);
  auto wide = s;
  wide.cascade = CascadeSpec{2, 4};
  EXPECT_EQ(wide.cascade_right_contexts(), (std::vector<int>{2, 2}));
  nlohmann::ordered_json j = s;
  EXPECT_EQ(j.get<ModelSpec>(), s);
}

TEST(Encode, RejectsWrongInputWidth) {
  auto spec = tiny_spec();
  auto params = init_params(spec, 1);
  ParamVars<float> p(params);
  auto x = Var<float>::constant(random_input<float>(5, 9, 1));
  EXPECT_THROW(encode(spec, p, x), core::ContractViolation);
}

TEST(Encode, CausalEncoderIgnoresFuture) {
  auto spec = tiny_student();
  auto params = init_params(spec, 2);
  ParamVars<float> p(params);
  const std::size_t frames = 9;
  auto base_in = random_input<float>(frames, spec.input_dim, 3);
  auto base = encode(spec, p, Var<float>::constant(base_in)).rnnt.value();
  Prng rng(4, 4);
  for (std::size_t t = 0; t + 1 < frames; ++t) {
    auto in = base_in;
    for (std::size_t r = t + 1; r < frames; ++r)
      for (std::size_t j = 0; j < spec.input_dim; ++j) in.at(r, j) += static_cast<float>(rng.normal() * 3.0);
    auto out = encode(spec, p, Var<float>::constant(in)).rnnt.value();
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t j = 0; j < spec.encoder.model_dim; ++j) ASSERT_EQ(out.at(r, j), base.at(r, j));
  }
}

void expect_lookahead(const ModelSpec& spec, bool second_pass, long lookahead) {
  auto params = init_params(spec, 5);
  ParamVars<float> p(params);
  const std::size_t frames = 16;
  auto base_in = random_input<float>(frames, spec.input_dim, 6);
  auto pick = [&](const EncoderOutput<float>& e) { return second_pass ? e.second_pass.value() : e.rnnt.value(); };
  auto base = pick(encode(spec, p, Var<float>::constant(base_in)));
  Prng rng(7, 7);
  bool changed_inside = false;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t first = t + static_cast<std::size_t>(lookahead) + 1;
    if (first >= frames) break;
    auto in = base_in;
    for (std::size_t r = first; r < frames; ++r)
      for (std::size_t j = 0; j < spec.input_dim; ++j) in.at(r, j) += static_cast<float>(rng.normal() * 3.0);
    auto out = pick(encode(spec, p, Var<float>::constant(in)));
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t j = 0; j < spec.encoder.model_dim; ++j) ASSERT_EQ(out.at(r, j), base.at(r, j));
    for (std::size_t j = 0; j < spec.encoder.model_dim; ++j) changed_inside |= out.at(first - 1, j) != base.at(first - 1, j);
  }
  // The bound is tight: frames just inside the lookahead window do see the change.
  EXPECT_TRUE(changed_inside);
}

TEST(Encode, NonCausalEncoderLookaheadIsBounded) {
  auto spec = tiny_spec();
  EXPECT_EQ(spec.encoder_lookahead(), 4);
  expect_lookahead(spec, false, spec.encoder_lookahead());
}

TEST(Encode, CascadeSecondPassRightContextIsBounded) {
  auto spec = tiny_student();
  expect_lookahead(spec, true, spec.cascade_lookahead());
}

TEST(Encode, HydraWithoutPrivateBlocksSharesFeatures) {
  auto spec = tiny_spec();
  spec.hydra = {2, 0, 0};
  auto params = init_params(spec, 8);
  ParamVars<float> p(params);
  auto out = encode(spec, p, Var<float>::constant(random_input<float>(6, spec.input_dim, 9)));
  EXPECT_EQ(out.rnnt.value(), out.w2v.value());
}

TEST(Encode, HydraHeadsInitializedIndependently) {
  auto params = init_params(tiny_spec(), 8);
  EXPECT_NE(params.at("rnnt.0.mhsa.q.w"), params.at("w2v.0.mhsa.q.w"));
}

TEST(Encode, EmptyCascadeIsIdentity) {
  auto spec = tiny_student();
  spec.cascade->extra_blocks = 0;
  spec.cascade->right_ctx_frames = 0;
  auto params = init_params(spec, 10);
  ParamVars<float> p(params);
  auto out = encode(spec, p, Var<float>::constant(random_input<float>(6, spec.input_dim, 11)));
  EXPECT_EQ(out.second_pass.value(), out.rnnt.value());
  auto plain = tiny_spec();
  EXPECT_THROW(cascade_encode(plain, p, out.rnnt), core::ContractViolation);
}

TEST(LabelEncoder, EmptySequenceGivesStartRow) {
  auto spec = tiny_spec();
  auto params = init_params(spec, 12);
  ParamVars<float> p(params);
  EXPECT_EQ(label_encode(spec, p, std::vector<int>{}).shape(), (core::Shape{1, 6}));
  EXPECT_THROW(label_encode(spec, p, std::vector<int>{5}), core::ContractViolation);
  EXPECT_THROW(label_encode(spec, p, std::vector<int>{0}), core::ContractViolation);
}

TEST(LabelEncoder, PrefixProperty) {
  auto spec = tiny_spec();
  spec.label_encoder.layers = 2;
  auto params = init_params(spec, 13);
  ParamVars<float> p(params);
  auto a = label_encode(spec, p, std::vector<int>{1, 2, 3, 4}).value();
  auto b = label_encode(spec, p, std::vector<int>{1, 2, 4, 1}).value();
  for (std::size_t u = 0; u <= 2; ++u)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a.at(u, j), b.at(u, j));
  bool differs = false;
  for (std::size_t j = 0; j < 6; ++j) differs |= a.at(3, j) != b.at(3, j);
  EXPECT_TRUE(differs);
}

TEST(LabelEncoder, GradientCheck) {
  auto spec = tiny_spec();
  auto params = init_params(spec, 14).cast<double>();
  Prng rng(15, 15);
  Tensor<double> readout({3, 6});
  for (auto& x : readout.data) x = rng.normal();
  auto f = [&](const ParamVars<double>& p) {
    auto out = label_encode(spec, p, std::vector<int>{2, 3});
    return core::sum(core::mul(out, Var<double>::constant(readout)));
  };
  core::ParameterSet<double> label_only;
  for (const auto& e : params.entries())
    label_only.add(e.name, e.value, e.name.rfind("label.", 0) != 0);
  auto r = core::grad_check<double>(f, label_only, {.epsilon = 1e-6});
  EXPECT_FALSE(r.failed) << r.failure;
  EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_param;
}

TEST(Joint, ZeroLogitsAreUniform) {
  auto spec = tiny_spec();
  auto params = init_params(spec, 16);
  for (auto& x : params.at("joint.out.w").data) x = 0.0f;
  ParamVars<float> p(params);
  auto enc = Var<float>::constant(random_input<float>(3, 8, 17));
  auto pred = Var<float>::constant(random_input<float>(2, 6, 18));
  auto lp = joint(spec, p, enc, pred).value();
  ASSERT_EQ(lp.shape, (core::Shape{6, 5}));
  for (float v : lp.data) EXPECT_NEAR(std::exp(v), 0.2, 1e-6);
}

TEST(Joint, HatNormalizesAndSaturates) {
  auto spec = tiny_spec();
  spec.joint.kind = JointKind::kHat;
  auto params = init_params(spec, 19).cast<double>();
  ParamVars<double> p(params);
  auto enc = Var<double>::constant(random_input<double>(4, 8, 20));
  auto pred = Var<double>::constant(random_input<double>(3, 6, 21));
  auto lp = joint(spec, p, enc, pred).value();
  for (std::size_t r = 0; r < lp.rows(); ++r) {
    double total = 0;
    for (std::size_t k = 0; k < lp.cols(); ++k) total += std::exp(lp.at(r, k));
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  Tensor<double> z({1, 5}, std::vector<double>{60.0, 0.3, -0.2, 1.0, 0.0});
  auto sat = hat_log_probs(Var<double>::constant(z)).value();
  EXPECT_NEAR(sat.data[0], 0.0, 1e-12);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LT(std::exp(sat.data[k]), 1e-25);
}

TEST(Joint, HatGradient) {
  core::ParameterSet<double> ps;
  Prng rng(22, 22);
  Tensor<double> z({3, 5}), readout({3, 5});
  for (auto& x : z.data) x = rng.normal();
  for (auto& x : readout.data) x = rng.normal();
  ps.add("z", z);
  auto f = [&](const ParamVars<double>& p) {
    return core::sum(core::mul(hat_log_probs(p["z"]), Var<double>::constant(readout)));
  };
  auto r = core::grad_check<double>(f, ps, {.epsilon = 1e-6});
  EXPECT_LT(r.max_relative_error, 1e-6);
}

double full_model_grad_error(JointKind kind) {
  auto spec = tiny_spec();
  spec.joint.kind = kind;
  auto params = init_params(spec, 23).cast<double>();
  auto input = random_input<double>(3, spec.input_dim, 24);
  std::vector<int> labels{1, 3};
  auto f = [&](const ParamVars<double>& p) {
    auto enc = encode(spec, p, Var<double>::constant(input));
    return loss::transducer_loss(spec, p, enc.rnnt, labels);
  };
  auto r = core::grad_check<double>(f, params, {.epsilon = 1e-4});
  EXPECT_FALSE(r.failed) << r.failure;
  return r.max_relative_error;
}

TEST(GradCheck, FullTransducerLossOnTinyModel) {
  EXPECT_LT(full_model_grad_error(JointKind::kRnnt), 1e-5);
  EXPECT_LT(full_model_grad_error(JointKind::kHat), 1e-5);
}

TEST(Hydra, GradientRouting) {
  auto spec = tiny_spec();
  auto params = init_params(spec, 25);
  std::vector<loss::Example<float>> batch(2);
  batch[0].input = random_input<float>(9, spec.input_dim, 26);
  batch[0].tokens = std::vector<int>{1, 2, 3};
  batch[1].input = random_input<float>(8, spec.input_dim, 27);
  batch[1].tokens = std::vector<int>{4};
  loss::SslConfig ssl;
  ssl.distractors = 2;
  auto grads_for = [&](loss::JustWeights w) {
    ParamVars<float> p(params);
    Prng rng(1, 1);
    auto out = loss::just_loss<float>(spec, p, batch, w, ssl, rng);
    core::backward(out.total);
    return p.gradients();
  };
  auto ssl_grads = grads_for({0.0, 1.0, 1.0});
  auto sup_grads = grads_for({1.0, 0.0, 0.0});
  auto all_zero = [](const Tensor<float>& g) {
    return std::all_of(g.data.begin(), g.data.end(), [](float v) { return v == 0.0f; });
  };
  bool ssl_trunk = false, sup_trunk = false;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& name = params.entries()[i].name;
    if (name.rfind("rnnt.", 0) == 0) {
      EXPECT_TRUE(all_zero(ssl_grads[i])) << name;
    }
    if (name.rfind("w2v.", 0) == 0) {
      EXPECT_TRUE(all_zero(sup_grads[i])) << name;
    }
    if (name.rfind("trunk.", 0) == 0) {
      ssl_trunk |= !all_zero(ssl_grads[i]);
      sup_trunk |= !all_zero(sup_grads[i]);
    }
  }
  EXPECT_TRUE(ssl_trunk);
  EXPECT_TRUE(sup_trunk);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  Checkpoint ckpt;
  ckpt.spec = tiny_spec();
  ckpt.params = init_params(ckpt.spec, 28);
  ckpt.step = 42;
  ckpt.provenance = {"exp-a", std::string("abc123"), std::nullopt, {"m1", "m2"}};
  auto bytes = serialize_checkpoint(ckpt);
  auto back = parse_checkpoint(bytes);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.id(), ckpt.id());
  EXPECT_TRUE(back.params.entries()[back.params.index_of("ssl.codebook")].frozen);
}

TEST(Checkpoint, CorruptionAndMissingTensorsRejected) {
  Checkpoint ckpt;
  ckpt.spec = tiny_spec();
  ckpt.params = init_params(ckpt.spec, 29);
  auto bytes = serialize_checkpoint(ckpt);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x1;
  EXPECT_THROW(parse_checkpoint(flipped), core::ContractViolation);
  Checkpoint partial = ckpt;
  partial.params = core::ParameterSet<float>();
  for (const auto& e : ckpt.params.entries())
    if (e.name != "joint.out.b") partial.params.add(e.name, e.value, e.frozen);
  EXPECT_THROW(parse_checkpoint(serialize_checkpoint(partial)), core::ContractViolation);
}

}  // namespace
}  // namespace nstlab::model
