#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "nstlab/core/ops.hpp"

namespace nstlab::model {

struct EncoderSpec {
  std::size_t num_blocks = 3;
  std::size_t model_dim = 32;
  std::size_t conv_kernel = 3;
  std::size_t attn_heads = 4;
  std::size_t ffn_mult = 4;
  // Frames; -1 is unbounded.
  int attn_left_ctx = 2;
  int attn_right_ctx = 2;
  bool causal = false;

  bool operator==(const EncoderSpec&) const = default;
};

// Non-causal second pass stacked on a causal first pass.
struct CascadeSpec {
  std::size_t extra_blocks = 1;
  // Total lookahead of the second pass in frames.
  std::size_t right_ctx_frames = 2;

  bool operator==(const CascadeSpec&) const = default;
};

// The last rnnt_private_blocks encoder blocks are duplicated into a parallel
// self-supervised head of equal depth.
struct HydraSpec {
  std::size_t shared_blocks = 2;
  std::size_t rnnt_private_blocks = 1;
  std::size_t w2v_private_blocks = 1;

  bool operator==(const HydraSpec&) const = default;
};

struct LabelEncoderSpec {
  std::size_t layers = 1;
  std::size_t units = 32;
  std::size_t proj_dim = 32;

  bool operator==(const LabelEncoderSpec&) const = default;
};

enum class JointKind { kRnnt, kHat };

struct JointSpec {
  std::size_t units = 32;
  // Label tokens, excluding blank. Joint output width is vocab_size + 1.
  std::size_t vocab_size = 32;
  JointKind kind = JointKind::kRnnt;

  bool operator==(const JointSpec&) const = default;
};

// Parameters of the self-supervised branch: mask embedding, target
// extractor, codebook, contrastive projection and masked-prediction head.
struct SslSpec {
  bool enabled = true;
  std::size_t codebook_size = 32;
  std::size_t code_dim = 16;

  bool operator==(const SslSpec&) const = default;
};

struct ModelSpec {
  std::size_t input_dim = 36;
  // Trailing input columns holding the domain one-hot; excluded from
  // self-supervised targets.
  std::size_t domain_dims = 4;
  EncoderSpec encoder;
  std::optional<CascadeSpec> cascade;
  HydraSpec hydra;
  LabelEncoderSpec label_encoder;
  JointSpec joint;
  SslSpec ssl;

  bool operator==(const ModelSpec&) const = default;

  void validate() const;
  std::size_t output_dim() const { return joint.vocab_size + 1; }
  core::AttentionBand encoder_band() const;
  core::ConvPadding encoder_padding() const;
  // Attention right context of each cascade block; sums to right_ctx_frames.
  std::vector<int> cascade_right_contexts() const;
  // Frames of future input the main encoder output depends on (0 if causal,
  // -1 if unbounded).
  long encoder_lookahead() const;
  long cascade_lookahead() const;
};

// Bi-directional Conformer teacher at desk scale.
ModelSpec teacher_spec(std::size_t input_dim, std::size_t domain_dims, std::size_t vocab_size);
// Causal encoder plus non-causal cascade.
ModelSpec student_spec(std::size_t input_dim, std::size_t domain_dims, std::size_t vocab_size);

// Closed-form parameter count for a spec.
std::size_t parameter_count(const ModelSpec& spec);

std::string to_string(JointKind kind);
JointKind joint_kind_from_string(const std::string& text);

void to_json(nlohmann::ordered_json& j, const ModelSpec& s);
void from_json(const nlohmann::ordered_json& j, ModelSpec& s);
// Canonical text form used in checkpoints and config hashes.
std::string canonical_text(const ModelSpec& s);

}  // namespace nstlab::model
