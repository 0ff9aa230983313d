#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nstlab/synth/corpus.hpp"
#include "nstlab/synth/features.hpp"
#include "nstlab/synth/manifest.hpp"

namespace nstlab::nst {

struct Item {
  std::string utt_id;
  synth::Frames frames;
  std::size_t domain = 0;
  std::optional<synth::Tokens> tokens;
};

// A manifest with its raw features held in memory.
struct Dataset {
  synth::FrontEnd front_end;
  std::vector<Item> items;

  std::size_t labeled() const;
};

// Raw features by utterance id, shared between datasets built from
// manifests over the same audio.
using FeatureStore = std::unordered_map<std::string, synth::Frames>;

void add_features(FeatureStore& store, const synth::Manifest& manifest);
Dataset make_dataset(const synth::Manifest& manifest, const FeatureStore& store, const synth::FrontEnd& fe);
Dataset load_dataset(const synth::Manifest& manifest, const synth::FrontEnd& fe);

}  // namespace nstlab::nst
