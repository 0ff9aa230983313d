#include "nstlab/model/spec.hpp"

namespace nstlab::model {

using core::ContractViolation;
using json = nlohmann::ordered_json;

void ModelSpec::validate() const {
  const auto& e = encoder;
  if (input_dim == 0 || domain_dims >= input_dim) throw ContractViolation("input_dim must exceed domain_dims");
  if (e.model_dim == 0 || e.attn_heads == 0 || e.model_dim % e.attn_heads != 0)
    throw ContractViolation("model_dim must be a positive multiple of attn_heads");
  if (e.conv_kernel == 0 || e.ffn_mult == 0) throw ContractViolation("conv_kernel and ffn_mult must be positive");
  if (e.attn_left_ctx < -1 || e.attn_right_ctx < -1) throw ContractViolation("attention context must be >= -1");
  if (e.causal && e.attn_right_ctx != 0) throw ContractViolation("causal encoder requires attn_right_ctx = 0");
  if (hydra.shared_blocks + hydra.rnnt_private_blocks != e.num_blocks)
    throw ContractViolation("hydra shared + rnnt private blocks must equal encoder.num_blocks");
  if (hydra.w2v_private_blocks != hydra.rnnt_private_blocks)
    throw ContractViolation("hydra heads must have equal depth");
  if (cascade && !e.causal) throw ContractViolation("cascade requires a causal first-pass encoder");
  if (label_encoder.layers == 0 || label_encoder.units == 0 || label_encoder.proj_dim == 0)
    throw ContractViolation("label encoder sizes must be positive");
  if (joint.units == 0 || joint.vocab_size < 2) throw ContractViolation("joint sizes invalid");
  if (ssl.enabled && (ssl.codebook_size < 2 || ssl.code_dim == 0)) throw ContractViolation("ssl sizes invalid");
}

core::AttentionBand ModelSpec::encoder_band() const {
  return {encoder.attn_left_ctx, encoder.causal ? 0 : encoder.attn_right_ctx};
}

core::ConvPadding ModelSpec::encoder_padding() const {
  return encoder.causal ? core::ConvPadding::kCausal : core::ConvPadding::kCentered;
}

std::vector<int> ModelSpec::cascade_right_contexts() const {
  std::vector<int> out;
  if (!cascade) return out;
  const std::size_t n = cascade->extra_blocks, r = cascade->right_ctx_frames;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(r / n + (i < r % n ? 1 : 0)));
  return out;
}

long ModelSpec::encoder_lookahead() const {
  if (encoder.causal) return 0;
  if (encoder.attn_right_ctx < 0) return -1;
  const long conv_right = static_cast<long>(core::conv_right_context(encoder.conv_kernel, encoder_padding()));
  return static_cast<long>(encoder.num_blocks) * (encoder.attn_right_ctx + conv_right);
}

long ModelSpec::cascade_lookahead() const { return cascade ? static_cast<long>(cascade->right_ctx_frames) : 0; }

ModelSpec teacher_spec(std::size_t input_dim, std::size_t domain_dims, std::size_t vocab_size) {
  ModelSpec s;
  s.input_dim = input_dim;
  s.domain_dims = domain_dims;
  s.joint.vocab_size = vocab_size;
  return s;
}

ModelSpec student_spec(std::size_t input_dim, std::size_t domain_dims, std::size_t vocab_size) {
  ModelSpec s;
  s.input_dim = input_dim;
  s.domain_dims = domain_dims;
  s.encoder.num_blocks = 2;
  s.encoder.causal = true;
  s.encoder.attn_right_ctx = 0;
  s.hydra = {2, 0, 0};
  s.cascade = CascadeSpec{};
  s.joint.vocab_size = vocab_size;
  s.ssl.enabled = false;
  return s;
}

namespace {

std::size_t block_params(std::size_t d, std::size_t kernel, std::size_t mult) {
  const std::size_t ln = 2 * d;
  const std::size_t ffn = ln + d * mult * d + mult * d + mult * d * d + d;
  const std::size_t mhsa = ln + 4 * d * d + 3 * d;
  const std::size_t conv = ln + (d * 2 * d + 2 * d) + (kernel * d + d) + ln + (d * d + d);
  return 2 * ffn + mhsa + conv + ln;
}

}  // namespace

std::size_t parameter_count(const ModelSpec& s) {
  const std::size_t d = s.encoder.model_dim;
  const std::size_t per_block = block_params(d, s.encoder.conv_kernel, s.encoder.ffn_mult);
  std::size_t n = s.input_dim * d + d;
  n += per_block * (s.encoder.num_blocks + s.hydra.w2v_private_blocks);
  if (s.cascade) n += per_block * s.cascade->extra_blocks;
  const std::size_t v1 = s.joint.vocab_size + 1, h = s.label_encoder.units, p = s.label_encoder.proj_dim;
  n += v1 * h;
  for (std::size_t l = 0; l < s.label_encoder.layers; ++l) n += h * 4 * h + h * 4 * h + 4 * h;
  n += h * p + p;
  const std::size_t j = s.joint.units;
  n += d * j + j + p * j + j * v1 + v1;
  if (s.ssl.enabled) {
    const std::size_t c = s.ssl.codebook_size, q = s.ssl.code_dim, target_in = s.input_dim - s.domain_dims;
    n += d + (target_in * q + q) + c * q + (d * q + q) + (d * c + c);
  }
  return n;
}

std::string to_string(JointKind kind) { return kind == JointKind::kHat ? "hat" : "rnnt"; }

JointKind joint_kind_from_string(const std::string& text) {
  if (text == "rnnt") return JointKind::kRnnt;
  if (text == "hat") return JointKind::kHat;
  throw ContractViolation("unknown joint kind '" + text + "'");
}

void to_json(json& j, const ModelSpec& s) {
  const auto& e = s.encoder;
  j = json{{"input_dim", s.input_dim},
           {"domain_dims", s.domain_dims},
           {"encoder",
            {{"num_blocks", e.num_blocks},
             {"model_dim", e.model_dim},
             {"conv_kernel", e.conv_kernel},
             {"attn_heads", e.attn_heads},
             {"ffn_mult", e.ffn_mult},
             {"attn_left_ctx", e.attn_left_ctx},
             {"attn_right_ctx", e.attn_right_ctx},
             {"causal", e.causal}}},
           {"cascade", s.cascade ? json{{"extra_blocks", s.cascade->extra_blocks},
                                        {"right_ctx_frames", s.cascade->right_ctx_frames}}
                                 : json(nullptr)},
           {"hydra",
            {{"shared_blocks", s.hydra.shared_blocks},
             {"rnnt_private_blocks", s.hydra.rnnt_private_blocks},
             {"w2v_private_blocks", s.hydra.w2v_private_blocks}}},
           {"label_encoder",
            {{"layers", s.label_encoder.layers},
             {"units", s.label_encoder.units},
             {"proj_dim", s.label_encoder.proj_dim}}},
           {"joint", {{"units", s.joint.units}, {"vocab_size", s.joint.vocab_size}, {"kind", to_string(s.joint.kind)}}},
           {"ssl",
            {{"enabled", s.ssl.enabled}, {"codebook_size", s.ssl.codebook_size}, {"code_dim", s.ssl.code_dim}}}};
}

void from_json(const json& j, ModelSpec& s) {
  ModelSpec def;
  s.input_dim = j.value("input_dim", def.input_dim);
  s.domain_dims = j.value("domain_dims", def.domain_dims);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    s.encoder.num_blocks = e.value("num_blocks", def.encoder.num_blocks);
    s.encoder.model_dim = e.value("model_dim", def.encoder.model_dim);
    s.encoder.conv_kernel = e.value("conv_kernel", def.encoder.conv_kernel);
    s.encoder.attn_heads = e.value("attn_heads", def.encoder.attn_heads);
    s.encoder.ffn_mult = e.value("ffn_mult", def.encoder.ffn_mult);
    s.encoder.attn_left_ctx = e.value("attn_left_ctx", def.encoder.attn_left_ctx);
    s.encoder.attn_right_ctx = e.value("attn_right_ctx", def.encoder.attn_right_ctx);
    s.encoder.causal = e.value("causal", def.encoder.causal);
  }
  s.cascade.reset();
  if (j.contains("cascade") && !j.at("cascade").is_null()) {
    const auto& c = j.at("cascade");
    s.cascade = CascadeSpec{c.value("extra_blocks", CascadeSpec{}.extra_blocks),
                            c.value("right_ctx_frames", CascadeSpec{}.right_ctx_frames)};
  }
  if (j.contains("hydra")) {
    const auto& h = j.at("hydra");
    s.hydra.shared_blocks = h.value("shared_blocks", def.hydra.shared_blocks);
    s.hydra.rnnt_private_blocks = h.value("rnnt_private_blocks", def.hydra.rnnt_private_blocks);
    s.hydra.w2v_private_blocks = h.value("w2v_private_blocks", def.hydra.w2v_private_blocks);
  }
  if (j.contains("label_encoder")) {
    const auto& l = j.at("label_encoder");
    s.label_encoder.layers = l.value("layers", def.label_encoder.layers);
    s.label_encoder.units = l.value("units", def.label_encoder.units);
    s.label_encoder.proj_dim = l.value("proj_dim", def.label_encoder.proj_dim);
  }
  if (j.contains("joint")) {
    const auto& jt = j.at("joint");
    s.joint.units = jt.value("units", def.joint.units);
    s.joint.vocab_size = jt.value("vocab_size", def.joint.vocab_size);
    s.joint.kind = joint_kind_from_string(jt.value("kind", std::string("rnnt")));
  }
  if (j.contains("ssl")) {
    const auto& q = j.at("ssl");
    s.ssl.enabled = q.value("enabled", def.ssl.enabled);
    s.ssl.codebook_size = q.value("codebook_size", def.ssl.codebook_size);
    s.ssl.code_dim = q.value("code_dim", def.ssl.code_dim);
  }
}

std::string canonical_text(const ModelSpec& s) {
  json j = s;
  return j.dump();
}

}  // namespace nstlab::model
