#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nstlab/core/params.hpp"
#include "nstlab/model/spec.hpp"

namespace nstlab::model {

struct Provenance {
  std::string experiment_id;
  std::optional<std::string> teacher_id;
  std::optional<std::string> init_id;
  std::vector<std::string> manifest_hashes;

  bool operator==(const Provenance&) const = default;
};

struct Checkpoint {
  ModelSpec spec;
  core::ParameterSet<float> params;
  std::int64_t step = 0;
  Provenance provenance;

  bool operator==(const Checkpoint&) const = default;

  // Throws if a spec-implied parameter is missing or mis-shaped.
  void validate() const;
  // Short hash of the serialized bytes.
  std::string id() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "NSTC", u32 version, u64 header length, header JSON (spec, provenance,
// step), then per tensor: u32 name length, name, u8 dtype (0 = float32),
// u8 frozen, u32 rank, u64 dims, little-endian data; finally the SHA-256 of
// all preceding bytes.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nstlab::model
