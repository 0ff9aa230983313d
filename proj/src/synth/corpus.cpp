#include "nstlab/synth/corpus.hpp"

#include <cstdio>
#include <fstream>

#include "nstlab/core/hash.hpp"
#include "nstlab/synth/features.hpp"

namespace nstlab::synth {

using core::ContractViolation;
using json = nlohmann::ordered_json;

std::map<int, int> CorpusSpec::variant_map() const {
  std::map<int, int> m;
  for (int i = 1; i <= num_variants; ++i) m[i] = base_vocab() + i;
  return m;
}

void CorpusSpec::validate() const {
  if (vocab_size < 2) throw ContractViolation("vocab_size must be >= 2");
  if (num_variants < 0 || base_vocab() < 2 || num_variants > base_vocab())
    throw ContractViolation("num_variants leaves too few base tokens");
  if (inconsistency_rate < 0.0 || inconsistency_rate > 1.0)
    throw ContractViolation("inconsistency_rate must lie in [0, 1]");
  if (feature_dim == 0 || stack == 0 || subsample == 0) throw ContractViolation("feature geometry must be positive");
  if (domains.empty()) throw ContractViolation("corpus needs at least one domain");
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const auto& dom = domains[d];
    if (dom.frames_min < 1 || dom.frames_max < dom.frames_min)
      throw ContractViolation("domain " + dom.name + ": frames-per-token range invalid");
    if (dom.tokens_min < 1 || dom.tokens_max < dom.tokens_min)
      throw ContractViolation("domain " + dom.name + ": token-length range invalid");
    if (dom.sigma < 0.0 || dom.silence_frames < 0) throw ContractViolation("domain " + dom.name + ": bad noise");
    if (dom.prototype_base > d) throw ContractViolation("domain " + dom.name + ": prototype_base must precede it");
    if (dom.train_labels == LabelSource::kPseudo)
      throw ContractViolation("domain " + dom.name + ": generated labels are human or none");
  }
}

std::string CorpusSpec::hash() const {
  json j = *this;
  return core::short_hash(j.dump());
}

CorpusSpec default_corpus_spec() {
  CorpusSpec s;
  s.num_variants = 16;
  s.inconsistency_rate = 0.1;
  DomainSpec vs{.name = "vs", .train_count = 500, .eval_count = 300, .tokens_min = 2, .tokens_max = 6,
                .frames_min = 2, .frames_max = 4, .sigma = 1.4, .train_labels = LabelSource::kHuman,
                .prototype_base = 0, .prototype_shift = 0.0, .silence_frames = 1};
  DomainSpec mf{.name = "mf", .train_count = 400, .eval_count = 150, .tokens_min = 6, .tokens_max = 12,
                .frames_min = 2, .frames_max = 4, .sigma = 1.2, .train_labels = LabelSource::kHuman,
                .prototype_base = 0, .prototype_shift = 0.6, .silence_frames = 1};
  DomainSpec vs_unsup = vs;
  vs_unsup.name = "vs_unsup";
  vs_unsup.train_count = 3000;
  vs_unsup.eval_count = 0;
  vs_unsup.train_labels = LabelSource::kNone;
  DomainSpec vs_new = vs;
  vs_new.name = "vs_new";
  vs_new.train_count = 1000;
  vs_new.eval_count = 200;
  vs_new.train_labels = LabelSource::kNone;
  vs_new.prototype_shift = 0.5;
  s.domains = {vs, mf, vs_unsup, vs_new};
  return s;
}

void to_json(json& j, const DomainSpec& d) {
  j = json{{"name", d.name},
           {"train_count", d.train_count},
           {"eval_count", d.eval_count},
           {"tokens_min", d.tokens_min},
           {"tokens_max", d.tokens_max},
           {"frames_min", d.frames_min},
           {"frames_max", d.frames_max},
           {"sigma", d.sigma},
           {"train_labels", to_string(d.train_labels)},
           {"prototype_base", d.prototype_base},
           {"prototype_shift", d.prototype_shift},
           {"silence_frames", d.silence_frames}};
}

void from_json(const json& j, DomainSpec& d) {
  DomainSpec def;
  d.name = j.at("name").get<std::string>();
  d.train_count = j.value("train_count", def.train_count);
  d.eval_count = j.value("eval_count", def.eval_count);
  d.tokens_min = j.value("tokens_min", def.tokens_min);
  d.tokens_max = j.value("tokens_max", def.tokens_max);
  d.frames_min = j.value("frames_min", def.frames_min);
  d.frames_max = j.value("frames_max", def.frames_max);
  d.sigma = j.value("sigma", def.sigma);
  d.train_labels = label_source_from_string(j.value("train_labels", std::string("human")));
  d.prototype_base = j.value("prototype_base", def.prototype_base);
  d.prototype_shift = j.value("prototype_shift", def.prototype_shift);
  d.silence_frames = j.value("silence_frames", def.silence_frames);
}

void to_json(json& j, const CorpusSpec& s) {
  j = json{{"vocab_size", s.vocab_size},
           {"num_variants", s.num_variants},
           {"inconsistency_rate", s.inconsistency_rate},
           {"feature_dim", s.feature_dim},
           {"stack", s.stack},
           {"subsample", s.subsample},
           {"frame_period_ms", s.frame_period_ms},
           {"seed", s.seed},
           {"domains", s.domains}};
}

void from_json(const json& j, CorpusSpec& s) {
  CorpusSpec def = default_corpus_spec();
  s.vocab_size = j.value("vocab_size", def.vocab_size);
  s.num_variants = j.value("num_variants", def.num_variants);
  s.inconsistency_rate = j.value("inconsistency_rate", def.inconsistency_rate);
  s.feature_dim = j.value("feature_dim", def.feature_dim);
  s.stack = j.value("stack", def.stack);
  s.subsample = j.value("subsample", def.subsample);
  s.frame_period_ms = j.value("frame_period_ms", def.frame_period_ms);
  s.seed = j.value("seed", def.seed);
  if (j.contains("domains")) {
    s.domains = j.at("domains").get<std::vector<DomainSpec>>();
  } else {
    s.domains = def.domains;
  }
}

std::vector<core::Tensor<float>> make_prototypes(const CorpusSpec& spec) {
  spec.validate();
  const std::size_t rows = static_cast<std::size_t>(spec.vocab_size) + 1, f = spec.feature_dim;
  std::vector<core::Tensor<float>> protos;
  for (std::size_t d = 0; d < spec.domains.size(); ++d) {
    const auto& dom = spec.domains[d];
    core::Prng rng(spec.seed, core::stream_of("prototypes/" + dom.name));
    core::Tensor<float> p({rows, f});
    const bool fresh = dom.prototype_base == d;
    for (std::size_t v = 1; v < rows; ++v) {
      for (std::size_t j = 0; j < f; ++j) {
        double z = rng.normal();
        p.at(v, j) = fresh ? static_cast<float>(z)
                           : static_cast<float>(protos[dom.prototype_base].at(v, j) + dom.prototype_shift * z);
      }
    }
    protos.push_back(std::move(p));
  }
  return protos;
}

Tokens corrupt_labels(const Tokens& tokens, const std::map<int, int>& variant_map, double rate, int vocab_size,
                      core::Prng& rng) {
  if (rate < 0.0 || rate > 1.0) throw ContractViolation("inconsistency rate must lie in [0, 1]");
  for (auto [from, to] : variant_map) {
    if (to < 1 || to > vocab_size || from < 1 || from > vocab_size)
      throw ContractViolation("variant map entry outside vocabulary");
  }
  Tokens out = tokens;
  for (auto& t : out) {
    auto it = variant_map.find(t);
    if (it != variant_map.end() && rng.uniform() < rate) t = it->second;
  }
  return out;
}

namespace {

struct Sampled {
  Frames frames;
  Tokens tokens;
};

Sampled sample_utterance(const CorpusSpec& spec, const DomainSpec& dom, const core::Tensor<float>& protos,
                         core::Prng& rng) {
  const int length = rng.range(dom.tokens_min, dom.tokens_max);
  Tokens tokens;
  for (int i = 0; i < length; ++i) {
    int t;
    do {
      t = rng.range(1, spec.base_vocab());
    } while (!tokens.empty() && t == tokens.back());
    tokens.push_back(t);
  }
  std::vector<std::size_t> rows;
  for (int i = 0; i < dom.silence_frames; ++i) rows.push_back(0);
  for (int t : tokens) {
    int n = rng.range(dom.frames_min, dom.frames_max);
    for (int i = 0; i < n; ++i) rows.push_back(static_cast<std::size_t>(t));
  }
  for (int i = 0; i < dom.silence_frames; ++i) rows.push_back(0);
  const std::size_t f = spec.feature_dim;
  Frames frames({rows.size(), f});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < f; ++j)
      frames.at(r, j) = static_cast<float>(protos.at(rows[r], j) + dom.sigma * rng.normal());
  return {std::move(frames), std::move(tokens)};
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "features", ec);
  if (ec) throw std::runtime_error("cannot create corpus directory " + out_dir.string() + ": " + ec.message());
  const auto protos = make_prototypes(spec);
  const auto variants = spec.variant_map();
  GeneratedCorpus corpus;
  for (Manifest* m : {&corpus.train, &corpus.eval}) {
    m->header.corpus_hash = spec.hash();
    m->header.feature_root = std::filesystem::absolute(out_dir).lexically_normal().string();
    m->header.frame_period_ms = spec.frame_period_ms;
  }
  for (std::size_t d = 0; d < spec.domains.size(); ++d) {
    const auto& dom = spec.domains[d];
    for (int split = 0; split < 2; ++split) {
      const bool train = split == 0;
      const std::size_t count = train ? dom.train_count : dom.eval_count;
      for (std::size_t i = 0; i < count; ++i) {
        char id[96];
        std::snprintf(id, sizeof(id), "%s-%s-%05zu", train ? "train" : "eval", dom.name.c_str(), i);
        core::Prng rng(spec.seed, core::stream_of(id));
        auto sample = sample_utterance(spec, dom, protos[d], rng);
        UtteranceRecord r;
        r.utt_id = id;
        r.feature_file = std::string("features/") + id + ".nstf";
        r.num_frames = sample.frames.dim(0);
        r.domain = d;
        r.oracle_tokens = sample.tokens;
        // Eval utterances carry clean references; training labels follow the
        // domain's label source and the human-inconsistency model.
        if (!train) {
          r.label_source = LabelSource::kHuman;
          r.tokens = sample.tokens;
        } else if (dom.train_labels == LabelSource::kHuman) {
          core::Prng label_rng(spec.seed, core::stream_of(std::string(id) + "/labels"));
          r.label_source = LabelSource::kHuman;
          r.tokens = corrupt_labels(sample.tokens, variants, spec.inconsistency_rate, spec.vocab_size, label_rng);
        }
        write_features(sample.frames, out_dir / r.feature_file);
        (train ? corpus.train : corpus.eval).records.push_back(std::move(r));
      }
    }
  }
  write_manifest(corpus.train, out_dir / "train.jsonl");
  write_manifest(corpus.eval, out_dir / "eval.jsonl");
  write_corpus_spec(spec, out_dir / "corpus.json");
  return corpus;
}

CorpusSpec read_corpus_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus spec " + path.string());
  CorpusSpec spec = json::parse(in);
  spec.validate();
  return spec;
}

void write_corpus_spec(const CorpusSpec& spec, const std::filesystem::path& path) {
  json j = spec;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus spec " + path.string());
  out << j.dump(2) << "\n";
}

FrontEnd front_end(const CorpusSpec& spec) { return {spec.stack, spec.subsample, spec.num_domains()}; }

Frames model_input(const Frames& frames, std::size_t domain, const FrontEnd& fe) {
  return stack_and_tag(frames, fe.stack, fe.subsample, domain, fe.num_domains);
}

Frames load_model_input(const Manifest& m, const UtteranceRecord& r, const FrontEnd& fe) {
  return model_input(read_features(m.feature_path(r)), r.domain, fe);
}

}  // namespace nstlab::synth
