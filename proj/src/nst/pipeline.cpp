#include "nstlab/nst/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_map>

#include "nstlab/core/hash.hpp"
#include "nstlab/decode/filter.hpp"
#include "nstlab/model/network.hpp"
#include "nstlab/nst/labels.hpp"

namespace nstlab::nst {

using core::ContractViolation;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string to_string(InitialMode m) { return m == InitialMode::kSupervised ? "supervised" : "just_hydra"; }

std::string to_string(ReinitPolicy p) {
  switch (p) {
    case ReinitPolicy::kFreshRandom: return "fresh_random";
    case ReinitPolicy::kFixedInitCheckpoint: return "fixed_init_checkpoint";
    case ReinitPolicy::kPreviousGeneration: return "previous_generation";
  }
  return "?";
}

InitialMode initial_mode_from_string(const std::string& text) {
  if (text == "supervised") return InitialMode::kSupervised;
  if (text == "just_hydra") return InitialMode::kJustHydra;
  throw ContractViolation("unknown initial training mode '" + text + "'");
}

ReinitPolicy reinit_policy_from_string(const std::string& text) {
  if (text == "fresh_random") return ReinitPolicy::kFreshRandom;
  if (text == "fixed_init_checkpoint") return ReinitPolicy::kFixedInitCheckpoint;
  if (text == "previous_generation") return ReinitPolicy::kPreviousGeneration;
  throw ContractViolation("unknown student re-init policy '" + text + "'");
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<core::Tensor<float>> model_inputs(const Workspace& ws, const synth::Manifest& m) {
  std::vector<core::Tensor<float>> inputs;
  inputs.reserve(m.records.size());
  for (const auto& r : m.records) {
    auto it = ws.features.find(r.utt_id);
    if (it == ws.features.end()) throw ContractViolation("no features loaded for " + r.utt_id);
    inputs.push_back(synth::model_input(it->second, r.domain, ws.front_end));
  }
  return inputs;
}

}  // namespace

Workspace Workspace::open(const fs::path& corpus_dir, std::optional<fs::path> cache_dir) {
  Workspace ws;
  ws.corpus_dir = corpus_dir;
  ws.corpus = synth::read_corpus_spec(corpus_dir / "corpus.json");
  ws.front_end = synth::front_end(ws.corpus);
  ws.train = synth::read_manifest(corpus_dir / "train.jsonl");
  ws.eval = synth::read_manifest(corpus_dir / "eval.jsonl");
  add_features(ws.features, ws.train);
  add_features(ws.features, ws.eval);
  ws.cache_dir = std::move(cache_dir);
  if (ws.cache_dir) fs::create_directories(*ws.cache_dir);
  return ws;
}

std::size_t Workspace::domain_index(const std::string& name) const {
  for (std::size_t d = 0; d < corpus.domains.size(); ++d)
    if (corpus.domains[d].name == name) return d;
  throw ContractViolation("unknown domain '" + name + "'");
}

synth::Manifest Workspace::train_subset(const std::vector<std::string>& domains, bool labeled_only) const {
  std::set<std::size_t> keep;
  for (const auto& name : domains) keep.insert(domain_index(name));
  synth::Manifest m;
  m.header = train.header;
  for (const auto& r : train.records) {
    if (!keep.empty() && !keep.contains(r.domain)) continue;
    if (labeled_only && !r.tokens) continue;
    m.records.push_back(r);
  }
  return m;
}

std::map<std::string, double> Workspace::wer_by_name(const eval::EvalResult& r) const {
  std::map<std::string, double> out;
  for (const auto& [d, w] : r.per_domain) out[corpus.domains.at(d).name] = 100.0 * w.wer();
  return out;
}

model::Checkpoint run_training(Workspace& ws, const TrainJob& job) {
  json key = {{"spec", job.spec},
              {"trainer", job.trainer},
              {"init", job.init ? json(job.init->id()) : json(job.init_seed)},
              {"data", synth::manifest_hash(job.data)},
              {"experiment", job.provenance.experiment_id},
              {"teacher", job.provenance.teacher_id ? json(*job.provenance.teacher_id) : json(nullptr)}};
  const std::string hash = core::short_hash(key.dump());
  std::optional<fs::path> cached;
  if (ws.cache_dir) {
    cached = *ws.cache_dir / (hash + ".nstc");
    if (fs::exists(*cached)) return model::load_checkpoint(*cached);
  }
  model::Checkpoint ckpt;
  ckpt.spec = job.spec;
  if (job.init) {
    if (!(job.init->spec == job.spec)) throw ContractViolation("training init checkpoint has a different model spec");
    ckpt.params = job.init->params;
  } else {
    ckpt.params = model::init_params(job.spec, job.init_seed);
  }
  auto data = make_dataset(job.data, ws.features, ws.front_end);
  train(job.spec, ckpt.params, data, job.trainer);
  ckpt.step = static_cast<std::int64_t>((job.init ? job.init->step : 0) + static_cast<std::int64_t>(job.trainer.steps));
  ckpt.provenance = job.provenance;
  if (job.init) ckpt.provenance.init_id = job.init->id();
  ckpt.provenance.manifest_hashes.push_back(synth::manifest_hash(job.data));
  if (cached) model::save_checkpoint(ckpt, *cached);
  return ckpt;
}

eval::EvalResult evaluate_checkpoint(const Workspace& ws, const model::Checkpoint& ckpt,
                                     std::optional<decode::DecodeMode> mode, std::size_t threads) {
  decode::DecodeOptions options;
  options.mode = mode;
  auto decoded = decode::decode_all(ckpt.spec, ckpt.params, model_inputs(ws, ws.eval), options, threads);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ws.eval.records.size(); ++i) index.emplace(ws.eval.records[i].utt_id, i);
  std::size_t failures = 0;
  auto result = eval::evaluate_with(ws.eval, [&](const synth::UtteranceRecord& r) {
    const auto& h = decoded.hypotheses[index.at(r.utt_id)];
    if (!h) ++failures;
    return h ? h->tokens : synth::Tokens{};
  });
  result.decode_failures = failures;
  return result;
}

void NstConfig::validate() const {
  if (max_generations < 1) throw ContractViolation("max_generations must be at least 1");
  if (!(convergence_epsilon >= 0)) throw ContractViolation("convergence_epsilon must be non-negative");
  if (human_hours < 0) throw ContractViolation("human_hours must be non-negative");
  if (!(stage0_label_fraction > 0 && stage0_label_fraction <= 1))
    throw ContractViolation("stage0_label_fraction must be in (0, 1]");
  teacher_spec.validate();
  student_spec.validate();
  if (initial_mode == InitialMode::kJustHydra && !teacher_spec.ssl.enabled)
    throw ContractViolation("just_hydra initial training needs a teacher spec with the ssl branch");
}

namespace {

std::optional<decode::DecodeMode> mode_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return decode::decode_mode_from_string(j.at(key).get<std::string>());
}

}  // namespace

void to_json(json& j, const NstConfig& c) {
  j = json{{"experiment_id", c.experiment_id},
           {"initial_mode", to_string(c.initial_mode)},
           {"reinit", to_string(c.reinit)},
           {"human_hours", c.human_hours},
           {"filter_threshold", c.filter_threshold},
           {"max_generations", c.max_generations},
           {"convergence_epsilon", c.convergence_epsilon},
           {"stop_on_plateau", c.stop_on_plateau},
           {"primary_domain", c.primary_domain},
           {"teacher_spec", c.teacher_spec},
           {"student_spec", c.student_spec},
           {"stage0_trainer", c.stage0_trainer},
           {"student_trainer", c.student_trainer},
           {"stage0_domains", c.stage0_domains},
           {"stage0_label_fraction", c.stage0_label_fraction},
           {"pseudo_domains", c.pseudo_domains},
           {"pseudo_label_mode", c.pseudo_label_mode ? json(decode::to_string(*c.pseudo_label_mode)) : json(nullptr)},
           {"seed", c.seed},
           {"threads", c.threads}};
}

void from_json(const json& j, NstConfig& c) {
  NstConfig d = c;
  d.experiment_id = j.value("experiment_id", d.experiment_id);
  if (j.contains("initial_mode")) d.initial_mode = initial_mode_from_string(j.at("initial_mode").get<std::string>());
  if (j.contains("reinit")) d.reinit = reinit_policy_from_string(j.at("reinit").get<std::string>());
  d.human_hours = j.value("human_hours", d.human_hours);
  d.filter_threshold = j.value("filter_threshold", d.filter_threshold);
  d.max_generations = j.value("max_generations", d.max_generations);
  d.convergence_epsilon = j.value("convergence_epsilon", d.convergence_epsilon);
  d.stop_on_plateau = j.value("stop_on_plateau", d.stop_on_plateau);
  d.primary_domain = j.value("primary_domain", d.primary_domain);
  if (j.contains("teacher_spec")) d.teacher_spec = j.at("teacher_spec").get<model::ModelSpec>();
  if (j.contains("student_spec")) d.student_spec = j.at("student_spec").get<model::ModelSpec>();
  if (j.contains("stage0_trainer")) d.stage0_trainer = j.at("stage0_trainer").get<TrainerConfig>();
  if (j.contains("student_trainer")) d.student_trainer = j.at("student_trainer").get<TrainerConfig>();
  d.stage0_domains = j.value("stage0_domains", d.stage0_domains);
  d.stage0_label_fraction = j.value("stage0_label_fraction", d.stage0_label_fraction);
  d.pseudo_domains = j.value("pseudo_domains", d.pseudo_domains);
  if (j.contains("pseudo_label_mode")) d.pseudo_label_mode = mode_from_json(j, "pseudo_label_mode");
  d.seed = j.value("seed", d.seed);
  d.threads = j.value("threads", d.threads);
  c = std::move(d);
}

json to_ledger_record(const GenerationReport& r) {
  return json{{"kind", "generation"},
              {"generation", r.generation},
              {"teacher_id", r.teacher_id},
              {"student_init_id", r.student_init_id},
              {"checkpoint_id", r.checkpoint_id},
              {"mix", {{"human_hours", r.human_hours}, {"pseudo_hours", r.pseudo_hours}, {"filter_threshold", r.filter_threshold}}},
              {"utterances", r.utterances},
              {"pseudo_failures", r.pseudo_failures},
              {"wer", r.wer},
              {"wall_clock_s", r.wall_clock_s}};
}

GenerationReport generation_from_ledger(const json& j) {
  if (j.value("kind", "") != "generation") throw ContractViolation("ledger record is not a generation report");
  GenerationReport r;
  r.generation = j.at("generation").get<std::size_t>();
  r.teacher_id = j.at("teacher_id").get<std::string>();
  r.student_init_id = j.at("student_init_id").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  const auto& mix = j.at("mix");
  r.human_hours = mix.at("human_hours").get<double>();
  r.pseudo_hours = mix.at("pseudo_hours").get<double>();
  r.filter_threshold = mix.at("filter_threshold").get<double>();
  r.utterances = j.at("utterances").get<std::size_t>();
  r.pseudo_failures = j.at("pseudo_failures").get<std::size_t>();
  r.wer = j.at("wer").get<std::map<std::string, double>>();
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  return r;
}

Ledger::Ledger(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
}

void Ledger::append(const json& record) {
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to ledger " + path_.string());
  out << record.dump() << "\n";
  out.flush();
}

std::vector<json> read_ledger(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open ledger " + path.string());
  std::vector<json> records;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) records.push_back(json::parse(line));
  return records;
}

std::vector<json> without_timing(std::vector<json> records) {
  for (auto& r : records) r.erase("wall_clock_s");
  return records;
}

ProvenanceGraph replay_ledger(const std::vector<json>& records) {
  ProvenanceGraph graph;
  std::size_t expected_generation = 1;
  for (const auto& r : records) {
    ProvenanceNode node;
    node.kind = r.at("kind").get<std::string>();
    const std::string id = r.at("checkpoint_id").get<std::string>();
    if (node.kind == "generation") {
      node.generation = r.at("generation").get<std::size_t>();
      if (node.generation != expected_generation)
        throw ContractViolation("ledger generations are not contiguous at " + std::to_string(node.generation));
      ++expected_generation;
      node.teacher = r.at("teacher_id").get<std::string>();
      node.init = r.at("student_init_id").get<std::string>();
    } else if (node.kind == "stage0") {
      if (r.contains("init_id") && !r.at("init_id").is_null()) node.init = r.at("init_id").get<std::string>();
    } else if (node.kind != "external") {
      throw ContractViolation("unknown ledger record kind '" + node.kind + "'");
    }
    if (graph.contains(id) && !(graph.at(id) == node))
      throw ContractViolation("checkpoint " + id + " recorded twice with different provenance");
    graph[id] = node;
  }
  for (const auto& [id, node] : graph) {
    for (const auto& ref : {node.teacher, node.init})
      if (ref && !graph.contains(*ref)) throw ContractViolation("checkpoint " + id + " references unknown " + *ref);
  }
  // Depth-first search for cycles through teacher and init edges.
  std::map<std::string, int> state;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    int& s = state[id];
    if (s == 2) return;
    if (s == 1) throw ContractViolation("provenance cycle through " + id);
    s = 1;
    const auto& node = graph.at(id);
    for (const auto& ref : {node.teacher, node.init})
      if (ref && *ref != id) visit(*ref);
      else if (ref) throw ContractViolation("checkpoint " + id + " is its own ancestor");
    state[id] = 2;
  };
  for (const auto& [id, node] : graph) visit(id);
  return graph;
}

bool plateaued(double best_before, double current, double epsilon) { return best_before - current < epsilon; }

GenerationOutcome run_generation(const NstConfig& config, std::size_t generation, const model::Checkpoint& teacher,
                                 const model::Checkpoint& student_init, Workspace& ws, const fs::path& exp_dir,
                                 Ledger& ledger) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = exp_dir / ("gen" + std::to_string(generation));
  fs::create_directories(dir);

  // Pseudo labels are regenerated from scratch for every teacher.
  const auto pool = ws.train_subset(config.pseudo_domains, false);
  decode::DecodeOptions options;
  options.mode = config.pseudo_label_mode;
  auto labeled = pseudo_label(teacher, pool, ws.features, ws.front_end, options, config.threads);
  synth::write_manifest(labeled.manifest, dir / "pseudo.jsonl");

  // Human labels replace pseudo labels on a seeded subset of the
  // human-labeled utterances.
  synth::Manifest human, pseudo_human, pseudo_rest;
  human.header = pseudo_human.header = pseudo_rest.header = labeled.manifest.header;
  std::unordered_map<std::string, const synth::UtteranceRecord*> original;
  for (const auto& r : pool.records) original.emplace(r.utt_id, &r);
  for (const auto& r : labeled.manifest.records) {
    const auto* o = original.at(r.utt_id);
    if (o->label_source == synth::LabelSource::kHuman) {
      human.records.push_back(*o);
      pseudo_human.records.push_back(r);
    } else {
      pseudo_rest.records.push_back(r);
    }
  }
  core::Prng mix_rng(config.seed, core::stream_of("mix/gen" + std::to_string(generation)));
  MixResult mixed = config.human_hours > 0 || !human.records.empty()
                        ? mix_labels(human, pseudo_human, config.human_hours, mix_rng)
                        : MixResult{pseudo_human, 0.0, pseudo_human.hours(), 0};
  std::unordered_map<std::string, const synth::UtteranceRecord*> chosen;
  for (const auto& r : mixed.manifest.records) chosen.emplace(r.utt_id, &r);

  synth::Manifest pseudo_only;
  pseudo_only.header = labeled.manifest.header;
  synth::Manifest training;
  training.header = labeled.manifest.header;
  for (const auto& r : labeled.manifest.records) {
    auto it = chosen.find(r.utt_id);
    const auto& rec = it != chosen.end() ? *it->second : r;
    if (rec.label_source == synth::LabelSource::kPseudo) pseudo_only.records.push_back(rec);
  }
  const auto kept = decode::filter_manifest(pseudo_only, config.filter_threshold);
  std::set<std::string> kept_ids;
  for (const auto& r : kept.records) kept_ids.insert(r.utt_id);
  GenerationReport report;
  for (const auto& r : labeled.manifest.records) {
    auto it = chosen.find(r.utt_id);
    const auto& rec = it != chosen.end() ? *it->second : r;
    if (rec.label_source == synth::LabelSource::kHuman) {
      training.records.push_back(rec);
      report.human_hours += training.hours_of(rec);
    } else if (kept_ids.contains(rec.utt_id)) {
      training.records.push_back(rec);
      report.pseudo_hours += training.hours_of(rec);
    }
  }
  training.header.provenance["filter_threshold"] = config.filter_threshold;
  training.header.provenance["human_hours"] = report.human_hours;
  synth::write_manifest(training, dir / "train.jsonl");
  if (training.records.empty()) throw GenerationFailed("generation " + std::to_string(generation) + ": no training data left after filtering");

  TrainJob job;
  job.spec = config.student_spec;
  job.trainer = config.student_trainer;
  job.trainer.seed = config.seed * 1000 + generation;
  job.init = student_init;
  job.data = training;
  job.provenance.experiment_id = config.experiment_id;
  job.provenance.teacher_id = teacher.id();
  model::Checkpoint student;
  try {
    student = run_training(ws, job);
  } catch (const TrainingDiverged& e) {
    throw GenerationFailed("generation " + std::to_string(generation) + " aborted: " + e.what());
  }
  model::save_checkpoint(student, dir / "checkpoint.nstc");

  report.generation = generation;
  report.teacher_id = teacher.id();
  report.student_init_id = student_init.id();
  report.checkpoint_id = student.id();
  report.filter_threshold = config.filter_threshold;
  report.utterances = training.records.size();
  report.pseudo_failures = labeled.failed.size();
  report.wer = ws.wer_by_name(evaluate_checkpoint(ws, student, std::nullopt, config.threads));
  report.wall_clock_s = seconds_since(t0);
  write_text(dir / "report.json", to_ledger_record(report).dump(2) + "\n");
  ledger.append(to_ledger_record(report));
  return {report, std::move(student)};
}

TrainJob initial_job(const NstConfig& config, const Workspace& ws) {
  config.validate();
  TrainJob stage0;
  stage0.spec = config.teacher_spec;
  stage0.trainer = config.stage0_trainer;
  stage0.init_seed = config.seed;
  stage0.trainer.seed = config.seed * 1000;
  stage0.provenance.experiment_id = config.experiment_id;
  // Labeled utterances of the stage-0 domains, thinned to the configured
  // fraction by a seeded shuffle.
  auto labeled = ws.train_subset(config.stage0_domains, true);
  if (config.stage0_label_fraction < 1.0) {
    core::Prng rng(config.seed, core::stream_of("stage0/labels"));
    rng.shuffle(labeled.records);
    labeled.records.resize(static_cast<std::size_t>(
        std::llround(config.stage0_label_fraction * static_cast<double>(labeled.records.size()))));
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < ws.train.records.size(); ++i) position.emplace(ws.train.records[i].utt_id, i);
    std::sort(labeled.records.begin(), labeled.records.end(),
              [&](const auto& a, const auto& b) { return position.at(a.utt_id) < position.at(b.utt_id); });
  }
  if (config.initial_mode == InitialMode::kSupervised) {
    stage0.trainer.weights = {1.0, 0.0, 0.0};
    stage0.data = labeled;
  } else {
    if (!config.stage0_trainer.weights.ssl_active())
      throw ContractViolation("just_hydra initial training needs positive self-supervised weights");
    stage0.data = ws.train_subset({}, false);
    std::set<std::string> ids;
    for (const auto& r : labeled.records) ids.insert(r.utt_id);
    for (auto& r : stage0.data.records) {
      if (r.tokens && !ids.contains(r.utt_id)) {
        r.tokens.reset();
        r.label_source = synth::LabelSource::kNone;
      }
    }
  }
  return stage0;
}

NstResult run_nst(const NstConfig& config, Workspace& ws, const fs::path& exp_dir,
                  const std::optional<model::Checkpoint>& init_override) {
  config.validate();
  ws.domain_index(config.primary_domain);
  fs::create_directories(exp_dir / "gen0");
  write_text(exp_dir / "config.json", json(config).dump(2) + "\n");
  fs::remove(exp_dir / "ledger.jsonl");
  Ledger ledger(exp_dir / "ledger.jsonl");
  NstResult result;

  // Stage 0: the initial teacher.
  const auto t0 = std::chrono::steady_clock::now();
  model::Checkpoint initial = run_training(ws, initial_job(config, ws));
  model::save_checkpoint(initial, exp_dir / "gen0" / "checkpoint.nstc");
  result.stage0.checkpoint_id = initial.id();
  result.stage0.wer = ws.wer_by_name(evaluate_checkpoint(ws, initial, std::nullopt, config.threads));
  result.stage0.wall_clock_s = seconds_since(t0);
  json stage_record{{"kind", "stage0"},
                    {"checkpoint_id", initial.id()},
                    {"init_id", nullptr},
                    {"mode", to_string(config.initial_mode)},
                    {"wer", result.stage0.wer},
                    {"wall_clock_s", result.stage0.wall_clock_s}};
  write_text(exp_dir / "gen0" / "report.json", stage_record.dump(2) + "\n");
  ledger.append(stage_record);
  if (init_override) {
    ledger.append(json{{"kind", "external"}, {"checkpoint_id", init_override->id()}, {"role", "student_init"}});
    model::save_checkpoint(*init_override, exp_dir / "gen0" / "student_init.nstc");
  }
  result.checkpoints.push_back(initial);

  double best = result.stage0.wer.at(config.primary_domain);
  for (std::size_t gen = 1; gen <= config.max_generations; ++gen) {
    const model::Checkpoint& teacher = result.checkpoints.back();
    model::Checkpoint init;
    switch (config.reinit) {
      case ReinitPolicy::kFreshRandom:
        init.spec = config.student_spec;
        init.params = model::init_params(config.student_spec, config.seed * 1000 + 100 + gen);
        init.provenance.experiment_id = config.experiment_id;
        ledger.append(json{{"kind", "external"}, {"checkpoint_id", init.id()}, {"role", "fresh_init"}});
        break;
      case ReinitPolicy::kFixedInitCheckpoint:
        init = init_override ? *init_override : result.checkpoints.front();
        break;
      case ReinitPolicy::kPreviousGeneration:
        init = gen == 1 && init_override ? *init_override : teacher;
        break;
    }
    if (!(init.spec == config.student_spec))
      throw ContractViolation("student init checkpoint does not match the student spec; use fresh_random or an init checkpoint");
    auto outcome = run_generation(config, gen, teacher, init, ws, exp_dir, ledger);
    const double current = outcome.report.wer.at(config.primary_domain);
    result.generations.push_back(outcome.report);
    result.checkpoints.push_back(std::move(outcome.student));
    if (!result.converged && plateaued(best, current, config.convergence_epsilon)) {
      result.converged = true;
      if (config.stop_on_plateau) break;
    }
    best = std::min(best, current);
  }
  return result;
}

NstConfig default_nst_config(const synth::CorpusSpec& corpus) {
  NstConfig c;
  c.teacher_spec = model::teacher_spec(corpus.input_dim(), corpus.num_domains(), static_cast<std::size_t>(corpus.vocab_size));
  c.student_spec = c.teacher_spec;
  c.stage0_trainer.steps = 4000;
  c.stage0_trainer.weights = {1.0, 1.0, 1.0};
  c.stage0_trainer.unlabeled_batch_size = 4;
  c.stage0_trainer.dropout = 0.2;
  c.student_trainer.steps = 4000;
  c.student_trainer.weights = {1.0, 0.0, 0.0};
  c.student_trainer.dropout = 0.2;
  c.student_trainer.noise = {.time_mask_count = 1, .time_mask_min = 1, .time_mask_max = 3,
                             .feat_mask_count = 1, .feat_mask_min = 1, .feat_mask_max = 4};
  return c;
}

}  // namespace nstlab::nst
