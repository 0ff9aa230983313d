#include "nstlab/decode/filter.hpp"

#include "nstlab/core/tensor.hpp"

namespace nstlab::decode {

synth::Manifest filter_manifest(const synth::Manifest& manifest, double threshold) {
  synth::Manifest out;
  out.header = manifest.header;
  for (const auto& r : manifest.records) {
    if (!r.confidence) throw core::ContractViolation("filter_manifest: record " + r.utt_id + " has no confidence");
    if (*r.confidence >= threshold) out.records.push_back(r);
  }
  out.header.provenance["filter_threshold"] = threshold;
  return out;
}

std::vector<FilterPoint> filter_sweep(const synth::Manifest& manifest, std::span<const double> thresholds) {
  std::vector<FilterPoint> points;
  for (double t : thresholds) {
    auto kept = filter_manifest(manifest, t);
    points.push_back({t, kept.records.size(), kept.hours()});
  }
  return points;
}

}  // namespace nstlab::decode
