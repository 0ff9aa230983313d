#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nstlab/nst/pipeline.hpp"

namespace nstlab::eval {

class UnknownPreset : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One row of a comparison table. `wer` holds percent WER keyed by eval
// domain; keys of the form "domain@mode" come from a non-default decode mode.
struct Row {
  std::string label;
  // Position on the plot's x axis.
  double x = 0.0;
  std::map<std::string, double> wer;
  std::optional<std::string> error;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::string corpus_hash;
  std::vector<Row> rows;
  double cpu_seconds = 0.0;
};

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentOptions {
  std::filesystem::path out_dir = "experiments";
  std::uint64_t seed = 1;
  std::size_t num_seeds = 3;
  std::size_t threads = 0;
  // Merge patch applied to {"corpus": CorpusSpec, "nst": NstConfig} before
  // the preset's own adjustments.
  nlohmann::ordered_json overrides = nlohmann::ordered_json::object();
  // Extra sweep points requested on the command line.
  std::optional<double> threshold;
  std::optional<double> human_hours;
  // Trained checkpoints are shared through out_dir/cache unless disabled.
  bool use_cache = true;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  // Row keys drawn as series; empty plots the primary domain only.
  std::vector<std::string> series;
};

// Everything one seed of a preset needs.
struct PresetRun {
  nst::Workspace& ws;
  nst::NstConfig config;
  std::filesystem::path dir;
  const ExperimentOptions& options;
};

struct ExperimentPreset {
  std::string name;
  // Which comparison this preset mirrors and what the rows mean.
  std::string comparison;
  nlohmann::ordered_json corpus_overrides = nlohmann::ordered_json::object();
  std::function<void(nst::NstConfig&)> configure;
  std::function<std::vector<Row>(PresetRun&)> rows;
  std::function<std::vector<Assertion>(const std::vector<Row>& median, const std::vector<SeedRun>& runs,
                                       const nst::NstConfig& config)>
      check;
  PlotSpec plot;
};

const std::vector<ExperimentPreset>& presets();
// Throws UnknownPreset.
const ExperimentPreset& find_preset(const std::string& name);

struct ExperimentReport {
  std::string preset;
  std::string comparison;
  nlohmann::ordered_json config;
  std::string config_hash;
  std::vector<SeedRun> runs;
  // Per-row, per-key median over seeds whose row succeeded.
  std::vector<Row> median;
  std::vector<Assertion> assertions;
  PlotSpec plot;
  double wall_clock_s = 0.0;
  double cpu_seconds = 0.0;

  bool passed() const;
};

// Desk-scale corpus and NST configuration every preset starts from.
synth::CorpusSpec desk_corpus(std::uint64_t seed);
nst::NstConfig desk_config(const synth::CorpusSpec& corpus, std::uint64_t seed);

// Runs the preset for options.num_seeds consecutive seeds starting at
// options.seed and evaluates its assertions on the per-row medians. Row
// failures are recorded in the row and the report is still produced.
ExperimentReport run_experiment(const std::string& preset, const ExperimentOptions& options);

double median(std::vector<double> values);
std::vector<Row> median_rows(const std::vector<SeedRun>& runs);

nlohmann::ordered_json to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const nlohmann::ordered_json& j);
std::string render_text(const ExperimentReport& r);
// Column-oriented plot data: one line per row, x then one column per series.
std::string render_tsv(const ExperimentReport& r);
std::string render_svg(const ExperimentReport& r);
// report.json, report.txt, plot.tsv and plot.svg under `dir`.
void write_report(const ExperimentReport& r, const std::filesystem::path& dir);

}  // namespace nstlab::eval
