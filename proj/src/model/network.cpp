#include "nstlab/model/network.hpp"

#include <cmath>

#include "nstlab/core/prng.hpp"

namespace nstlab::model {

using core::AttentionBand;
using core::ContractViolation;
using core::ConvPadding;
using core::Prng;

std::string trunk_block(std::size_t i) { return "trunk." + std::to_string(i); }
std::string rnnt_block(std::size_t i) { return "rnnt." + std::to_string(i); }
std::string w2v_block(std::size_t i) { return "w2v." + std::to_string(i); }
std::string cascade_block(std::size_t i) { return "cascade." + std::to_string(i); }

namespace {

class Initializer {
 public:
  Initializer(ParameterSet<float>& set, std::uint64_t seed) : set_(set), seed_(seed) {}

  void glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    uniform(name, {fan_in, fan_out}, a);
  }
  void uniform(const std::string& name, core::Shape shape, double a) {
    Prng rng(seed_, core::stream_of(name));
    Tensor<float> t(std::move(shape));
    for (auto& x : t.data) x = static_cast<float>(rng.uniform(-a, a));
    set_.add(name, std::move(t));
  }
  void normal(const std::string& name, core::Shape shape, double sd, bool frozen = false) {
    Prng rng(seed_, core::stream_of(name));
    Tensor<float> t(std::move(shape));
    for (auto& x : t.data) x = static_cast<float>(sd * rng.normal());
    set_.add(name, std::move(t), frozen);
  }
  void constant(const std::string& name, core::Shape shape, float value) {
    set_.add(name, Tensor<float>(std::move(shape), value));
  }
  void layer_norm(const std::string& pre, std::size_t d) {
    constant(pre + ".g", {d}, 1.0f);
    constant(pre + ".b", {d}, 0.0f);
  }
  void linear(const std::string& pre, std::size_t in, std::size_t out, bool bias = true) {
    glorot(pre + ".w", in, out);
    if (bias) constant(pre + ".b", {out}, 0.0f);
  }
  void block(const std::string& pre, const ModelSpec& spec) {
    const std::size_t d = spec.encoder.model_dim, f = spec.encoder.ffn_mult * d, k = spec.encoder.conv_kernel;
    for (const char* ffn : {".ffn1", ".ffn2"}) {
      layer_norm(pre + ffn + ".ln", d);
      linear(pre + ffn + ".l1", d, f);
      linear(pre + ffn + ".l2", f, d);
    }
    layer_norm(pre + ".mhsa.ln", d);
    // Key bias is omitted: it shifts every score of a query equally.
    linear(pre + ".mhsa.q", d, d);
    linear(pre + ".mhsa.k", d, d, false);
    linear(pre + ".mhsa.v", d, d);
    linear(pre + ".mhsa.o", d, d);
    layer_norm(pre + ".conv.ln1", d);
    linear(pre + ".conv.pw1", d, 2 * d);
    uniform(pre + ".conv.dw.w", {k, d}, 1.0 / std::sqrt(static_cast<double>(k)));
    constant(pre + ".conv.dw.b", {d}, 0.0f);
    layer_norm(pre + ".conv.ln2", d);
    linear(pre + ".conv.pw2", d, d);
    layer_norm(pre + ".ln", d);
  }

 private:
  ParameterSet<float>& set_;
  std::uint64_t seed_;
};

}  // namespace

ParameterSet<float> init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParameterSet<float> set;
  Initializer init(set, seed);
  const std::size_t d = spec.encoder.model_dim;
  init.linear("input", spec.input_dim, d);
  for (std::size_t i = 0; i < spec.hydra.shared_blocks; ++i) init.block(trunk_block(i), spec);
  for (std::size_t i = 0; i < spec.hydra.rnnt_private_blocks; ++i) init.block(rnnt_block(i), spec);
  for (std::size_t i = 0; i < spec.hydra.w2v_private_blocks; ++i) init.block(w2v_block(i), spec);
  if (spec.cascade)
    for (std::size_t i = 0; i < spec.cascade->extra_blocks; ++i) init.block(cascade_block(i), spec);

  const auto& le = spec.label_encoder;
  const std::size_t v1 = spec.output_dim();
  init.glorot("label.embed", v1, le.units);
  for (std::size_t l = 0; l < le.layers; ++l) {
    const std::string pre = "label.lstm" + std::to_string(l);
    init.glorot(pre + ".w", le.units, 4 * le.units);
    init.glorot(pre + ".u", le.units, 4 * le.units);
    Tensor<float> bias({4 * le.units}, 0.0f);
    for (std::size_t j = le.units; j < 2 * le.units; ++j) bias.data[j] = 1.0f;
    set.add(pre + ".b", std::move(bias));
  }
  init.linear("label.proj", le.units, le.proj_dim);

  init.linear("joint.enc", d, spec.joint.units);
  init.linear("joint.pred", le.proj_dim, spec.joint.units, false);
  init.linear("joint.out", spec.joint.units, v1);

  if (spec.ssl.enabled) {
    const std::size_t q = spec.ssl.code_dim, c = spec.ssl.codebook_size;
    init.normal("ssl.mask_emb", {1, d}, 0.1);
    init.linear("ssl.target", spec.input_dim - spec.domain_dims, q);
    // Updated by moving averages of assigned targets, never by gradients.
    init.normal("ssl.codebook", {c, q}, 1.0, true);
    init.linear("ssl.context", d, q);
    init.linear("ssl.mlm", d, c);
  }
  return set;
}

namespace {

template <typename T>
Var<T> ln(const ParamVars<T>& p, const std::string& pre, const Var<T>& x) {
  return core::layer_norm(x, p[pre + ".g"], p[pre + ".b"]);
}

template <typename T>
Var<T> lin(const ParamVars<T>& p, const std::string& pre, const Var<T>& x) {
  return core::linear(x, p[pre + ".w"], p[pre + ".b"]);
}

template <typename T>
Var<T> feed_forward(const ParamVars<T>& p, const std::string& pre, const Var<T>& x) {
  return lin(p, pre + ".l2", core::swish(lin(p, pre + ".l1", ln(p, pre + ".ln", x))));
}

struct BlockConfig {
  std::size_t heads;
  AttentionBand band;
  ConvPadding padding;
  double dropout = 0.0;
  core::Prng* rng = nullptr;
};

template <typename T>
Var<T> drop(const Var<T>& x, const BlockConfig& cfg) {
  return cfg.rng && cfg.dropout > 0 ? core::dropout(x, cfg.dropout, *cfg.rng) : x;
}

template <typename T>
Var<T> conformer_block(const ParamVars<T>& p, const std::string& pre, Var<T> x, const BlockConfig& cfg) {
  x = core::add(x, core::scale(drop(feed_forward(p, pre + ".ffn1", x), cfg), 0.5));
  {
    auto h = ln(p, pre + ".mhsa.ln", x);
    auto att = core::multi_head_attention(lin(p, pre + ".mhsa.q", h), core::matmul(h, p[pre + ".mhsa.k.w"]),
                                          lin(p, pre + ".mhsa.v", h), cfg.heads, cfg.band);
    x = core::add(x, drop(lin(p, pre + ".mhsa.o", att), cfg));
  }
  {
    auto h = core::glu(lin(p, pre + ".conv.pw1", ln(p, pre + ".conv.ln1", x)));
    h = core::depthwise_conv1d(h, p[pre + ".conv.dw.w"], p[pre + ".conv.dw.b"], cfg.padding);
    h = lin(p, pre + ".conv.pw2", core::swish(ln(p, pre + ".conv.ln2", h)));
    x = core::add(x, drop(h, cfg));
  }
  x = core::add(x, core::scale(drop(feed_forward(p, pre + ".ffn2", x), cfg), 0.5));
  return ln(p, pre + ".ln", x);
}

}  // namespace

template <typename T>
EncoderOutput<T> encode(const ModelSpec& spec, const ParamVars<T>& p, const Var<T>& input,
                        const EncodeOptions& options) {
  if (input.shape().size() != 2 || input.shape()[1] != spec.input_dim)
    throw ContractViolation("encode: input shape " + core::shape_string(input.shape()) + " does not match input_dim " +
                            std::to_string(spec.input_dim));
  if (input.shape()[0] == 0) throw ContractViolation("encode: empty input");
  EncoderOutput<T> out;
  Var<T> x = lin(p, "input", input);
  if (!options.mask_positions.empty()) {
    if (!spec.ssl.enabled) throw ContractViolation("encode: masking requires the ssl branch");
    std::vector<std::size_t> zeros(options.mask_positions.size(), 0);
    x = core::scatter_rows(x, options.mask_positions, core::gather_rows(p["ssl.mask_emb"], zeros));
  }
  out.projected = x;
  const BlockConfig cfg{spec.encoder.attn_heads, spec.encoder_band(), spec.encoder_padding(), options.dropout,
                        options.rng};
  for (std::size_t i = 0; i < spec.hydra.shared_blocks; ++i) x = conformer_block(p, trunk_block(i), x, cfg);
  if (options.rnnt_head) {
    Var<T> r = x;
    for (std::size_t i = 0; i < spec.hydra.rnnt_private_blocks; ++i) r = conformer_block(p, rnnt_block(i), r, cfg);
    out.rnnt = r;
    if (spec.cascade) out.second_pass = cascade_encode(spec, p, r, options.dropout, options.rng);
  }
  if (options.w2v_head) {
    Var<T> w = x;
    for (std::size_t i = 0; i < spec.hydra.w2v_private_blocks; ++i) w = conformer_block(p, w2v_block(i), w, cfg);
    out.w2v = w;
  }
  return out;
}

template <typename T>
Var<T> cascade_encode(const ModelSpec& spec, const ParamVars<T>& p, const Var<T>& causal_out, double dropout,
                      core::Prng* rng) {
  if (!spec.cascade) throw ContractViolation("cascade_encode: spec has no cascade");
  Var<T> x = causal_out;
  const auto rights = spec.cascade_right_contexts();
  for (std::size_t i = 0; i < spec.cascade->extra_blocks; ++i) {
    const BlockConfig cfg{spec.encoder.attn_heads, AttentionBand{spec.encoder.attn_left_ctx, rights[i]},
                          ConvPadding::kCausal, dropout, rng};
    x = conformer_block(p, cascade_block(i), x, cfg);
  }
  return x;
}

template <typename T>
LabelState<T> initial_label_state(const ModelSpec& spec) {
  LabelState<T> s;
  const std::size_t h = spec.label_encoder.units;
  for (std::size_t l = 0; l < spec.label_encoder.layers; ++l) {
    s.h.push_back(Var<T>::constant(Tensor<T>({1, h})));
    s.c.push_back(Var<T>::constant(Tensor<T>({1, h})));
  }
  return s;
}

template <typename T>
Var<T> label_step(const ModelSpec& spec, const ParamVars<T>& p, LabelState<T>& state, int token) {
  if (token < 0 || static_cast<std::size_t>(token) > spec.joint.vocab_size)
    throw ContractViolation("label token " + std::to_string(token) + " outside vocabulary");
  const std::size_t h = spec.label_encoder.units;
  const std::size_t id = static_cast<std::size_t>(token);
  Var<T> x = core::gather_rows(p["label.embed"], std::span<const std::size_t>(&id, 1));
  for (std::size_t l = 0; l < spec.label_encoder.layers; ++l) {
    const std::string pre = "label.lstm" + std::to_string(l);
    auto gates = core::add(core::add(core::matmul(x, p[pre + ".w"]), core::matmul(state.h[l], p[pre + ".u"])),
                           p[pre + ".b"]);
    auto i = core::sigmoid(core::slice_cols(gates, 0, h));
    auto f = core::sigmoid(core::slice_cols(gates, h, h));
    auto g = core::tanh(core::slice_cols(gates, 2 * h, h));
    auto o = core::sigmoid(core::slice_cols(gates, 3 * h, h));
    state.c[l] = core::add(core::mul(f, state.c[l]), core::mul(i, g));
    state.h[l] = core::mul(o, core::tanh(state.c[l]));
    x = state.h[l];
  }
  return lin(p, "label.proj", x);
}

template <typename T>
Var<T> label_encode(const ModelSpec& spec, const ParamVars<T>& p, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 1 || static_cast<std::size_t>(t) > spec.joint.vocab_size)
      throw ContractViolation("label token " + std::to_string(t) + " outside vocabulary");
  auto state = initial_label_state<T>(spec);
  std::vector<Var<T>> rows;
  rows.push_back(label_step(spec, p, state, 0));
  for (int t : tokens) rows.push_back(label_step(spec, p, state, t));
  return core::concat_rows(rows);
}

template <typename T>
Var<T> joint_enc_proj(const ParamVars<T>& p, const Var<T>& enc) {
  return lin(p, "joint.enc", enc);
}

template <typename T>
Var<T> joint_pred_proj(const ParamVars<T>& p, const Var<T>& pred) {
  return core::matmul(pred, p["joint.pred.w"]);
}

template <typename T>
Var<T> joint_logits(const ParamVars<T>& p, const Var<T>& enc_proj, const Var<T>& pred_proj) {
  return lin(p, "joint.out", core::tanh(core::outer_add(enc_proj, pred_proj)));
}

template <typename T>
Var<T> hat_log_probs(const Var<T>& logits) {
  if (logits.shape().size() != 2 || logits.shape()[1] < 2)
    throw ContractViolation("hat_log_probs expects [rows, 1 + labels]");
  const std::size_t m = logits.shape()[0], n = logits.shape()[1];
  Tensor<T> out({m, n});
  std::vector<double> blank(m), softmax(m * n);
  const auto& z = logits.value().data;
  for (std::size_t i = 0; i < m; ++i) {
    const double z0 = z[i * n];
    // log sigmoid(z0) = -softplus(-z0); log(1 - sigmoid(z0)) = -softplus(z0).
    auto softplus = [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
    blank[i] = 1.0 / (1.0 + std::exp(-z0));
    out.data[i * n] = static_cast<T>(-softplus(-z0));
    const double log_not_blank = -softplus(z0);
    double mx = z[i * n + 1];
    for (std::size_t j = 2; j < n; ++j) mx = std::max(mx, static_cast<double>(z[i * n + j]));
    double s = 0.0;
    for (std::size_t j = 1; j < n; ++j) s += std::exp(z[i * n + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 1; j < n; ++j) {
      const double ls = z[i * n + j] - lse;
      softmax[i * n + j] = std::exp(ls);
      out.data[i * n + j] = static_cast<T>(log_not_blank + ls);
    }
  }
  return core::make_op<T>("hat_log_probs", std::move(out), {logits},
                          [m, n, blank = std::move(blank), softmax = std::move(softmax)](core::Node<T>& node) {
                            auto& gz = node.parent(0).grad_buffer();
                            for (std::size_t i = 0; i < m; ++i) {
                              const T* g = &node.grad[i * n];
                              double label_sum = 0.0;
                              for (std::size_t j = 1; j < n; ++j) label_sum += g[j];
                              gz[i * n] += static_cast<T>(g[0] * (1.0 - blank[i]) - blank[i] * label_sum);
                              for (std::size_t j = 1; j < n; ++j)
                                gz[i * n + j] += static_cast<T>(g[j] - softmax[i * n + j] * label_sum);
                            }
                          });
}

template <typename T>
Var<T> normalize_joint(JointKind kind, const Var<T>& logits) {
  return kind == JointKind::kHat ? hat_log_probs(logits) : core::log_softmax_rows(logits);
}

template <typename T>
Var<T> joint(const ModelSpec& spec, const ParamVars<T>& p, const Var<T>& enc, const Var<T>& pred) {
  if (enc.shape().size() != 2 || enc.shape()[1] != spec.encoder.model_dim)
    throw ContractViolation("joint: encoder features have wrong width");
  if (pred.shape().size() != 2 || pred.shape()[1] != spec.label_encoder.proj_dim)
    throw ContractViolation("joint: label features have wrong width");
  return normalize_joint(spec.joint.kind, joint_logits(p, joint_enc_proj(p, enc), joint_pred_proj(p, pred)));
}

#define NSTLAB_INSTANTIATE(T)                                                                                   \
  template EncoderOutput<T> encode(const ModelSpec&, const ParamVars<T>&, const Var<T>&, const EncodeOptions&); \
  template Var<T> cascade_encode(const ModelSpec&, const ParamVars<T>&, const Var<T>&, double, core::Prng*);                        \
  template LabelState<T> initial_label_state<T>(const ModelSpec&);                                             \
  template Var<T> label_step(const ModelSpec&, const ParamVars<T>&, LabelState<T>&, int);                      \
  template Var<T> label_encode(const ModelSpec&, const ParamVars<T>&, std::span<const int>);                   \
  template Var<T> joint_enc_proj(const ParamVars<T>&, const Var<T>&);                                          \
  template Var<T> joint_pred_proj(const ParamVars<T>&, const Var<T>&);                                         \
  template Var<T> joint_logits(const ParamVars<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> normalize_joint(JointKind, const Var<T>&);                                                   \
  template Var<T> hat_log_probs(const Var<T>&);                                                                \
  template Var<T> joint(const ModelSpec&, const ParamVars<T>&, const Var<T>&, const Var<T>&);

NSTLAB_INSTANTIATE(float)
NSTLAB_INSTANTIATE(double)

#undef NSTLAB_INSTANTIATE

}  // namespace nstlab::model
