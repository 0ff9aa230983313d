#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nstlab::synth {

using Tokens = std::vector<int>;

enum class LabelSource { kHuman, kPseudo, kNone };

std::string to_string(LabelSource source);
LabelSource label_source_from_string(const std::string& text);

struct UtteranceRecord {
  std::string utt_id;
  // Relative to the manifest's feature root.
  std::string feature_file;
  std::size_t num_frames = 0;
  std::size_t domain = 0;
  std::optional<Tokens> tokens;
  LabelSource label_source = LabelSource::kNone;
  std::optional<double> confidence;
  Tokens oracle_tokens;

  bool operator==(const UtteranceRecord&) const = default;
};

struct ManifestHeader {
  int version = 1;
  std::string corpus_hash;
  std::string feature_root;
  double frame_period_ms = 10.0;
  // Free-form provenance, e.g. the teacher checkpoint that produced labels.
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  bool operator==(const ManifestHeader&) const = default;
};

struct Manifest {
  ManifestHeader header;
  std::vector<UtteranceRecord> records;

  bool operator==(const Manifest&) const = default;

  // Throws ContractViolation on duplicate ids or label/confidence invariant
  // violations.
  void validate() const;
  double hours() const;
  double hours_of(const UtteranceRecord& r) const;
  std::filesystem::path feature_path(const UtteranceRecord& r) const;
  const UtteranceRecord* find(const std::string& utt_id) const;
  std::vector<std::size_t> domains() const;
  // Copy keeping only records of the given domain.
  Manifest select_domain(std::size_t domain) const;
};

inline constexpr int kManifestVersion = 1;

std::string serialize_manifest(const Manifest& m);
Manifest parse_manifest(const std::string& text);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);
// Short content hash of the serialized manifest.
std::string manifest_hash(const Manifest& m);

}  // namespace nstlab::synth
