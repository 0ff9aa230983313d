#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "nstlab/decode/filter.hpp"
#include "nstlab/eval/experiment.hpp"
#include "nstlab/model/checkpoint.hpp"
#include "nstlab/nst/labels.hpp"
#include "nstlab/nst/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace nstlab;

namespace {

enum ExitCode { kOk = 0, kGeneral = 1, kUsage = 2, kUnknownPreset = 3, kBadConfig = 4, kMissingInput = 5 };

struct CliError : std::runtime_error {
  CliError(ExitCode c, const std::string& kind, const std::string& message)
      : std::runtime_error(message), code(c), kind(kind) {}
  ExitCode code;
  std::string kind;
};

int fail(ExitCode code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"code", static_cast<int>(code)}, {"kind", kind}, {"message", message}}}}.dump() << "\n";
  return code;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw CliError(kMissingInput, "missing_input", what + " not found: " + p.string());
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  require_file(path, "config");
  std::ifstream in(path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw CliError(kBadConfig, "malformed_config", "config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw CliError(kBadConfig, "malformed_config", path + ": " + e.what());
  }
}

json section(const json& config, const char* key) {
  if (!config.contains(key)) return json::object();
  if (!config.at(key).is_object())
    throw CliError(kBadConfig, "malformed_config", std::string("config section '") + key + "' must be an object");
  return config.at(key);
}

// Applies a config section to a typed default; schema errors are config errors.
template <typename T>
T patched(const T& base, const json& patch, const char* what) {
  try {
    json j = base;
    j.merge_patch(patch);
    return j.get<T>();
  } catch (const std::exception& e) {
    throw CliError(kBadConfig, "malformed_config", std::string(what) + ": " + e.what());
  }
}

nst::Workspace open_corpus(const fs::path& dir, std::optional<fs::path> cache = std::nullopt) {
  require_file(dir / "corpus.json", "corpus");
  return nst::Workspace::open(dir, std::move(cache));
}

nst::NstConfig nst_config_for(const synth::CorpusSpec& corpus, const json& config, std::uint64_t seed) {
  auto c = patched(eval::desk_config(corpus, seed), section(config, "nst"), "nst");
  c.seed = seed;
  try {
    c.validate();
  } catch (const core::ContractViolation& e) {
    throw CliError(kBadConfig, "malformed_config", e.what());
  }
  return c;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

synth::Manifest manifest_arg(const std::string& path, const synth::Manifest& fallback) {
  if (path.empty()) return fallback;
  require_file(path, "manifest");
  return synth::read_manifest(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy student training toolkit for synthetic speech corpora"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", corpus_dir, checkpoint, manifest, preset, input, human_path, pseudo_path, mode;
  std::uint64_t seed = 1;
  std::optional<double> threshold, human_hours;
  std::size_t seeds = 3, threads = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out-dir", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  common(gen);

  auto* train = app.add_subcommand("train", "Train an initial model (supervised or JUST hydra)");
  common(train);
  train->add_option("--corpus", corpus_dir, "Corpus directory")->required();

  auto* label = app.add_subcommand("pseudo-label", "Pseudo-label a manifest with a teacher checkpoint");
  common(label);
  label->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  label->add_option("--checkpoint", checkpoint, "Teacher checkpoint")->required();
  label->add_option("--manifest", manifest, "Manifest to label (default: corpus training manifest)");

  auto* filter = app.add_subcommand("filter", "Keep pseudo-labeled records at or above a confidence threshold");
  common(filter);
  filter->add_option("--manifest", manifest, "Pseudo-labeled manifest")->required();
  filter->add_option("--threshold", threshold, "Confidence threshold in [0, 1]")->required();

  auto* mix = app.add_subcommand("mix", "Replace pseudo labels by human labels on a seeded subset");
  common(mix);
  mix->add_option("--human", human_path, "Human-labeled manifest")->required();
  mix->add_option("--pseudo", pseudo_path, "Pseudo-labeled manifest")->required();
  mix->add_option("--human-hours", human_hours, "Hours of human labels to mix in")->required();

  auto* evaluate = app.add_subcommand("evaluate", "WER of a checkpoint per eval domain");
  common(evaluate);
  evaluate->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  evaluate->add_option("--manifest", manifest, "Manifest to score (default: corpus eval manifest)");
  evaluate->add_option("--mode", mode, "causal_only, cascaded or full");

  auto* run = app.add_subcommand("nst-run", "Stage 0 then noisy student generations");
  common(run);
  run->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  run->add_option("--threshold", threshold, "Confidence filter threshold");
  run->add_option("--human-hours", human_hours, "Human hours mixed into each generation");

  auto* experiment = app.add_subcommand("experiment", "Run an experiment preset over several seeds");
  common(experiment);
  experiment->add_option("--preset", preset, "Preset name")->required();
  experiment->add_option("--seeds", seeds, "Number of consecutive seeds");
  experiment->add_option("--threshold", threshold, "Extra confidence threshold for sweeps");
  experiment->add_option("--human-hours", human_hours, "Extra human-hours point for sweeps");

  auto* report = app.add_subcommand("report", "Re-render a report from its JSON");
  common(report);
  report->add_option("--input", input, "report.json")->required();

  auto* list = app.add_subcommand("presets", "List experiment presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    const json config = load_config(config_path);
    const fs::path out(out_dir);

    if (*gen) {
      auto spec = patched(eval::desk_corpus(seed), section(config, "corpus"), "corpus");
      spec.seed = seed;
      try {
        spec.validate();
      } catch (const core::ContractViolation& e) {
        throw CliError(kBadConfig, "malformed_config", e.what());
      }
      auto corpus = synth::generate_corpus(spec, out);
      json summary{{"corpus_dir", out.string()},
                   {"corpus_hash", spec.hash()},
                   {"train_utterances", corpus.train.records.size()},
                   {"eval_utterances", corpus.eval.records.size()},
                   {"train_hours", corpus.train.hours()}};
      std::cout << summary.dump(2) << "\n";
    } else if (*train) {
      auto ws = open_corpus(corpus_dir);
      auto cfg = nst_config_for(ws.corpus, config, seed);
      auto ckpt = nst::run_training(ws, nst::initial_job(cfg, ws));
      model::save_checkpoint(ckpt, out / "checkpoint.nstc");
      auto wer = ws.wer_by_name(nst::evaluate_checkpoint(ws, ckpt, std::nullopt, threads));
      json summary{{"checkpoint", (out / "checkpoint.nstc").string()},
                   {"checkpoint_id", ckpt.id()},
                   {"mode", nst::to_string(cfg.initial_mode)},
                   {"wer", wer}};
      write_json(out / "train.json", summary);
      std::cout << summary.dump(2) << "\n";
    } else if (*label) {
      auto ws = open_corpus(corpus_dir);
      require_file(checkpoint, "checkpoint");
      auto teacher = model::load_checkpoint(checkpoint);
      auto source = manifest_arg(manifest, ws.train);
      auto result = nst::pseudo_label(teacher, source, ws.features, ws.front_end, {}, threads);
      fs::create_directories(out);
      synth::write_manifest(result.manifest, out / "pseudo.jsonl");
      std::cout << json{{"manifest", (out / "pseudo.jsonl").string()},
                        {"records", result.manifest.records.size()},
                        {"failed", result.failed}}
                       .dump(2)
                << "\n";
    } else if (*filter) {
      require_file(manifest, "manifest");
      auto kept = decode::filter_manifest(synth::read_manifest(manifest), *threshold);
      fs::create_directories(out);
      synth::write_manifest(kept, out / "filtered.jsonl");
      std::cout << json{{"manifest", (out / "filtered.jsonl").string()}, {"kept", kept.records.size()}, {"hours", kept.hours()}}
                       .dump(2)
                << "\n";
    } else if (*mix) {
      require_file(human_path, "human manifest");
      require_file(pseudo_path, "pseudo manifest");
      core::Prng rng(seed, core::stream_of("cli/mix"));
      auto mixed = nst::mix_labels(synth::read_manifest(human_path), synth::read_manifest(pseudo_path), *human_hours, rng);
      fs::create_directories(out);
      synth::write_manifest(mixed.manifest, out / "mixed.jsonl");
      std::cout << json{{"manifest", (out / "mixed.jsonl").string()},
                        {"human_hours", mixed.human_hours},
                        {"pseudo_hours", mixed.pseudo_hours},
                        {"human_utterances", mixed.human_utterances}}
                       .dump(2)
                << "\n";
    } else if (*evaluate) {
      auto ws = open_corpus(corpus_dir);
      require_file(checkpoint, "checkpoint");
      auto ckpt = model::load_checkpoint(checkpoint);
      auto target = manifest_arg(manifest, ws.eval);
      decode::DecodeOptions options;
      if (!mode.empty()) options.mode = decode::decode_mode_from_string(mode);
      auto result = eval::evaluate(ckpt.spec, ckpt.params, target, ws.front_end, options, threads);
      json per_domain = json::object();
      for (const auto& [d, w] : result.per_domain)
        per_domain[ws.corpus.domains.at(d).name] = {{"wer", 100.0 * w.wer()},
                                                    {"substitutions", w.substitutions},
                                                    {"deletions", w.deletions},
                                                    {"insertions", w.insertions},
                                                    {"ref_tokens", w.ref_tokens}};
      json summary{{"checkpoint_id", ckpt.id()},
                   {"mode", decode::to_string(options.mode.value_or(decode::default_decode_mode(ckpt.spec)))},
                   {"per_domain", per_domain},
                   {"overall_wer", 100.0 * result.overall.wer()},
                   {"decode_failures", result.decode_failures}};
      write_json(out / "eval.json", summary);
      std::cout << summary.dump(2) << "\n";
    } else if (*run) {
      auto ws = open_corpus(corpus_dir, out / "cache");
      auto cfg = nst_config_for(ws.corpus, config, seed);
      cfg.threads = threads;
      if (threshold) cfg.filter_threshold = *threshold;
      if (human_hours) cfg.human_hours = *human_hours;
      auto result = nst::run_nst(cfg, ws, out);
      json gens = json::array();
      for (const auto& g : result.generations) gens.push_back(nst::to_ledger_record(g));
      std::cout << json{{"stage0", {{"checkpoint_id", result.stage0.checkpoint_id}, {"wer", result.stage0.wer}}},
                        {"generations", gens},
                        {"converged", result.converged},
                        {"ledger", (out / "ledger.jsonl").string()}}
                       .dump(2)
                << "\n";
    } else if (*experiment) {
      eval::ExperimentOptions options;
      options.out_dir = out;
      options.seed = seed;
      options.num_seeds = seeds;
      options.threads = threads;
      options.threshold = threshold;
      options.human_hours = human_hours;
      options.overrides = config;
      eval::find_preset(preset);
      nst_config_for(patched(eval::desk_corpus(seed), section(config, "corpus"), "corpus"), config, seed);
      auto result = eval::run_experiment(preset, options);
      eval::write_report(result, out / preset);
      std::cout << eval::render_text(result);
    } else if (*report) {
      require_file(input, "report");
      std::ifstream in(input);
      eval::ExperimentReport r;
      try {
        r = eval::report_from_json(json::parse(in));
      } catch (const json::exception& e) {
        throw CliError(kBadConfig, "malformed_config", input + ": " + e.what());
      }
      eval::write_report(r, out);
      std::cout << eval::render_text(r);
    } else if (*list) {
      for (const auto& p : eval::presets()) std::cout << p.name << "\t" << p.comparison << "\n";
    }
    return kOk;
  } catch (const CliError& e) {
    return fail(e.code, e.kind, e.what());
  } catch (const eval::UnknownPreset& e) {
    return fail(kUnknownPreset, "unknown_preset", e.what());
  } catch (const std::exception& e) {
    return fail(kGeneral, "error", e.what());
  }
}
