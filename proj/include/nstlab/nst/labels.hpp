#pragma once

#include <string>
#include <vector>

#include "nstlab/core/prng.hpp"
#include "nstlab/decode/greedy.hpp"
#include "nstlab/model/checkpoint.hpp"
#include "nstlab/nst/dataset.hpp"
#include "nstlab/synth/manifest.hpp"

namespace nstlab::nst {

struct PseudoLabelResult {
  synth::Manifest manifest;
  // Utterances whose decode failed; they are left out of `manifest`.
  std::vector<std::string> failed;
};

// Replaces every record's tokens by the teacher's greedy hypothesis, marks it
// pseudo-labeled with its confidence, and records the teacher id in the
// header. Oracle tokens are untouched.
PseudoLabelResult pseudo_label(const model::Checkpoint& teacher, const synth::Manifest& manifest,
                               const FeatureStore& store, const synth::FrontEnd& fe,
                               const decode::DecodeOptions& options = {}, std::size_t threads = 0);

struct MixResult {
  synth::Manifest manifest;
  double human_hours = 0.0;
  double pseudo_hours = 0.0;
  std::size_t human_utterances = 0;
};

// Both manifests must hold the same utterances. A seeded random subset of
// utterances, accumulated in shuffled order while the running total stays
// nearest to `human_hours`, takes its tokens from `human`; every other
// utterance keeps its pseudo label. Output follows the pseudo manifest order.
MixResult mix_labels(const synth::Manifest& human, const synth::Manifest& pseudo, double human_hours, core::Prng& rng);

}  // namespace nstlab::nst
