#include "nstlab/nst/dataset.hpp"

#include <algorithm>

namespace nstlab::nst {

std::size_t Dataset::labeled() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const Item& i) { return i.tokens.has_value(); }));
}

void add_features(FeatureStore& store, const synth::Manifest& manifest) {
  for (const auto& r : manifest.records)
    if (!store.contains(r.utt_id)) store.emplace(r.utt_id, synth::read_features(manifest.feature_path(r)));
}

Dataset make_dataset(const synth::Manifest& manifest, const FeatureStore& store, const synth::FrontEnd& fe) {
  Dataset d;
  d.front_end = fe;
  d.items.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    if (r.domain >= fe.num_domains) throw core::ContractViolation("record " + r.utt_id + " has domain out of range");
    auto it = store.find(r.utt_id);
    if (it == store.end()) throw core::ContractViolation("no features loaded for " + r.utt_id);
    d.items.push_back({r.utt_id, it->second, r.domain, r.tokens});
  }
  return d;
}

Dataset load_dataset(const synth::Manifest& manifest, const synth::FrontEnd& fe) {
  FeatureStore store;
  add_features(store, manifest);
  return make_dataset(manifest, store, fe);
}

}  // namespace nstlab::nst
