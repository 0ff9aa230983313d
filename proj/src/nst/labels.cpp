#include "nstlab/nst/labels.hpp"

#include <numeric>
#include <unordered_map>

#include "nstlab/synth/corpus.hpp"

namespace nstlab::nst {

using core::ContractViolation;

PseudoLabelResult pseudo_label(const model::Checkpoint& teacher, const synth::Manifest& manifest,
                               const FeatureStore& store, const synth::FrontEnd& fe,
                               const decode::DecodeOptions& options, std::size_t threads) {
  std::vector<core::Tensor<float>> inputs;
  inputs.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    auto it = store.find(r.utt_id);
    if (it == store.end()) throw ContractViolation("no features loaded for " + r.utt_id);
    inputs.push_back(synth::model_input(it->second, r.domain, fe));
  }
  auto decoded = decode::decode_all(teacher.spec, teacher.params, inputs, options, threads);
  PseudoLabelResult out;
  out.manifest.header = manifest.header;
  out.manifest.header.provenance["teacher"] = teacher.id();
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& hyp = decoded.hypotheses[i];
    if (!hyp) {
      out.failed.push_back(manifest.records[i].utt_id);
      continue;
    }
    auto r = manifest.records[i];
    r.tokens = hyp->tokens;
    r.label_source = synth::LabelSource::kPseudo;
    r.confidence = hyp->confidence;
    out.manifest.records.push_back(std::move(r));
  }
  return out;
}

MixResult mix_labels(const synth::Manifest& human, const synth::Manifest& pseudo, double human_hours, core::Prng& rng) {
  if (human.records.size() != pseudo.records.size())
    throw ContractViolation("mix_labels: manifests cover different utterance sets");
  std::unordered_map<std::string, std::size_t> human_index;
  for (std::size_t i = 0; i < human.records.size(); ++i) {
    const auto& r = human.records[i];
    if (r.label_source != synth::LabelSource::kHuman || !r.tokens)
      throw ContractViolation("mix_labels: record " + r.utt_id + " has no human label");
    human_index.emplace(r.utt_id, i);
  }
  for (const auto& r : pseudo.records) {
    auto it = human_index.find(r.utt_id);
    if (it == human_index.end() || human.records[it->second].num_frames != r.num_frames)
      throw ContractViolation("mix_labels: manifests cover different utterance sets");
  }
  const double available = human.hours();
  if (human_hours < 0 || human_hours > available * (1 + 1e-12))
    throw ContractViolation("mix_labels: requested " + std::to_string(human_hours) + " human hours but only " +
                            std::to_string(available) + " are available");

  std::vector<std::size_t> order(pseudo.records.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<bool> take(pseudo.records.size(), false);
  MixResult out;
  for (std::size_t i : order) {
    const double h = pseudo.hours_of(pseudo.records[i]);
    if (out.human_hours + h / 2 > human_hours * (1 + 1e-12)) break;
    take[i] = true;
    out.human_hours += h;
    ++out.human_utterances;
  }
  out.manifest.header = pseudo.header;
  out.manifest.header.provenance["human_hours"] = out.human_hours;
  for (std::size_t i = 0; i < pseudo.records.size(); ++i) {
    const auto& p = pseudo.records[i];
    if (take[i]) {
      out.manifest.records.push_back(human.records[human_index.at(p.utt_id)]);
    } else {
      out.manifest.records.push_back(p);
      out.pseudo_hours += pseudo.hours_of(p);
    }
  }
  return out;
}

}  // namespace nstlab::nst
