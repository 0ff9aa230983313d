#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nstlab/core/prng.hpp"
#include "nstlab/core/tensor.hpp"
#include "nstlab/synth/features.hpp"
#include "nstlab/synth/manifest.hpp"

namespace nstlab::synth {

struct DomainSpec {
  std::string name;
  std::size_t train_count = 0;
  std::size_t eval_count = 0;
  int tokens_min = 2;
  int tokens_max = 6;
  int frames_min = 2;
  int frames_max = 4;
  double sigma = 1.0;
  // Labels attached to training utterances: human or none.
  LabelSource train_labels = LabelSource::kHuman;
  // Index of the domain whose prototypes this one starts from; its own index
  // draws fresh prototypes.
  std::size_t prototype_base = 0;
  // Scale of the Gaussian offset added to the base prototypes.
  double prototype_shift = 0.0;
  // Silence frames (zeros plus noise) before and after the tokens.
  int silence_frames = 1;
};

struct CorpusSpec {
  // Label tokens are 1..vocab_size; 0 is reserved for blank.
  int vocab_size = 32;
  // The last `num_variants` token ids are alternate spellings of tokens
  // 1..num_variants and never appear in ground truth.
  int num_variants = 4;
  double inconsistency_rate = 0.0;
  std::size_t feature_dim = 16;
  std::size_t stack = 2;
  std::size_t subsample = 2;
  double frame_period_ms = 10.0;
  std::uint64_t seed = 1;
  std::vector<DomainSpec> domains;

  std::size_t num_domains() const { return domains.size(); }
  std::size_t input_dim() const { return stack * feature_dim + num_domains(); }
  // Highest token id emitted by the generator.
  int base_vocab() const { return vocab_size - num_variants; }
  std::map<int, int> variant_map() const;
  void validate() const;
  std::string hash() const;
};

// Desk-scale default: VS-like, MF-like, VS-unsup-like (shares VS
// prototypes, unlabeled) and VS-new-like (shifted VS prototypes).
CorpusSpec default_corpus_spec();

void to_json(nlohmann::ordered_json& j, const DomainSpec& d);
void from_json(const nlohmann::ordered_json& j, DomainSpec& d);
void to_json(nlohmann::ordered_json& j, const CorpusSpec& s);
void from_json(const nlohmann::ordered_json& j, CorpusSpec& s);

// prototypes[domain] is [vocab_size + 1, F]; row 0 is the silence vector.
std::vector<core::Tensor<float>> make_prototypes(const CorpusSpec& spec);

struct GeneratedCorpus {
  Manifest train;
  Manifest eval;
};

// Writes features/<utt_id>.nstf plus train.jsonl, eval.jsonl and corpus.json
// under `out_dir`.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

CorpusSpec read_corpus_spec(const std::filesystem::path& path);
void write_corpus_spec(const CorpusSpec& spec, const std::filesystem::path& path);

// Frame stacking and domain tagging that turn stored features into model input.
struct FrontEnd {
  std::size_t stack = 2;
  std::size_t subsample = 2;
  std::size_t num_domains = 1;
};
FrontEnd front_end(const CorpusSpec& spec);
Frames model_input(const Frames& frames, std::size_t domain, const FrontEnd& fe);
Frames load_model_input(const Manifest& m, const UtteranceRecord& r, const FrontEnd& fe);

// Replaces each occurrence of a mapped token by its variant with probability
// `rate`, independently per occurrence.
Tokens corrupt_labels(const Tokens& tokens, const std::map<int, int>& variant_map, double rate, int vocab_size,
                      core::Prng& rng);

}  // namespace nstlab::synth
