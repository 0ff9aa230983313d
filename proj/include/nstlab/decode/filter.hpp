#pragma once

#include <span>
#include <vector>

#include "nstlab/synth/manifest.hpp"

namespace nstlab::decode {

// Keeps records with confidence >= threshold, in order. Every record must
// carry a confidence.
synth::Manifest filter_manifest(const synth::Manifest& manifest, double threshold);

struct FilterPoint {
  double threshold = 0.0;
  std::size_t kept = 0;
  double kept_hours = 0.0;
};

std::vector<FilterPoint> filter_sweep(const synth::Manifest& manifest, std::span<const double> thresholds);

}  // namespace nstlab::decode
