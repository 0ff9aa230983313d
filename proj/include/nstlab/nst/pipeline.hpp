#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nstlab/decode/greedy.hpp"
#include "nstlab/eval/evaluate.hpp"
#include "nstlab/model/checkpoint.hpp"
#include "nstlab/nst/dataset.hpp"
#include "nstlab/nst/trainer.hpp"
#include "nstlab/synth/corpus.hpp"

namespace nstlab::nst {

enum class InitialMode { kSupervised, kJustHydra };
enum class ReinitPolicy { kFreshRandom, kFixedInitCheckpoint, kPreviousGeneration };

std::string to_string(InitialMode m);
std::string to_string(ReinitPolicy p);
InitialMode initial_mode_from_string(const std::string& text);
ReinitPolicy reinit_policy_from_string(const std::string& text);

// A generated corpus loaded for training: spec, manifests and raw features.
struct Workspace {
  std::filesystem::path corpus_dir;
  synth::CorpusSpec corpus;
  synth::FrontEnd front_end;
  synth::Manifest train;
  synth::Manifest eval;
  FeatureStore features;
  // Trained checkpoints are reused from here when set.
  std::optional<std::filesystem::path> cache_dir;

  static Workspace open(const std::filesystem::path& corpus_dir,
                        std::optional<std::filesystem::path> cache_dir = std::nullopt);

  std::size_t domain_index(const std::string& name) const;
  // Training records of the named domains (all domains when empty).
  synth::Manifest train_subset(const std::vector<std::string>& domains, bool labeled_only) const;
  std::map<std::string, double> wer_by_name(const eval::EvalResult& r) const;
};

struct TrainJob {
  model::ModelSpec spec;
  TrainerConfig trainer;
  // Starting point; a fresh random initialization from `init_seed` when absent.
  std::optional<model::Checkpoint> init;
  std::uint64_t init_seed = 1;
  synth::Manifest data;
  model::Provenance provenance;
};

// Trains one model, or loads it from the workspace cache when an identical
// job (spec, trainer, init, training manifest) was trained before.
model::Checkpoint run_training(Workspace& ws, const TrainJob& job);

eval::EvalResult evaluate_checkpoint(const Workspace& ws, const model::Checkpoint& ckpt,
                                     std::optional<decode::DecodeMode> mode = std::nullopt, std::size_t threads = 0);

struct NstConfig {
  std::string experiment_id = "nst";
  InitialMode initial_mode = InitialMode::kJustHydra;
  ReinitPolicy reinit = ReinitPolicy::kFixedInitCheckpoint;
  double human_hours = 0.0;
  double filter_threshold = 0.0;
  std::size_t max_generations = 3;
  // Absolute WER points on the primary domain.
  double convergence_epsilon = 0.1;
  // When false every generation up to max_generations runs; convergence is
  // still reported.
  bool stop_on_plateau = true;
  std::string primary_domain = "vs";
  model::ModelSpec teacher_spec;
  model::ModelSpec student_spec;
  TrainerConfig stage0_trainer;
  TrainerConfig student_trainer;
  // Labeled domains for supervised stage 0; empty uses every labeled domain.
  std::vector<std::string> stage0_domains;
  // Fraction of those utterances that keep their labels in stage 0.
  double stage0_label_fraction = 1.0;
  // Domains pseudo-labeled each generation; empty uses every training domain.
  std::vector<std::string> pseudo_domains;
  std::optional<decode::DecodeMode> pseudo_label_mode;
  std::uint64_t seed = 1;
  std::size_t threads = 0;

  void validate() const;
};

void to_json(nlohmann::ordered_json& j, const NstConfig& c);
void from_json(const nlohmann::ordered_json& j, NstConfig& c);
NstConfig default_nst_config(const synth::CorpusSpec& corpus);

struct GenerationReport {
  std::size_t generation = 0;
  std::string teacher_id;
  std::string student_init_id;
  std::string checkpoint_id;
  double human_hours = 0.0;
  double pseudo_hours = 0.0;
  double filter_threshold = 0.0;
  std::size_t utterances = 0;
  std::size_t pseudo_failures = 0;
  std::map<std::string, double> wer;
  double wall_clock_s = 0.0;
};

nlohmann::ordered_json to_ledger_record(const GenerationReport& r);
GenerationReport generation_from_ledger(const nlohmann::ordered_json& j);

// Append-only JSON-lines file of provenance records: "external" (checkpoints
// made elsewhere), "stage0" and "generation".
class Ledger {
 public:
  explicit Ledger(std::filesystem::path path);
  void append(const nlohmann::ordered_json& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::vector<nlohmann::ordered_json> read_ledger(const std::filesystem::path& path);
// Records with wall-clock timings removed, for comparing runs.
std::vector<nlohmann::ordered_json> without_timing(std::vector<nlohmann::ordered_json> records);

struct ProvenanceNode {
  std::string kind;
  std::optional<std::string> teacher;
  std::optional<std::string> init;
  std::size_t generation = 0;

  bool operator==(const ProvenanceNode&) const = default;
};
using ProvenanceGraph = std::map<std::string, ProvenanceNode>;

// Rebuilds the checkpoint graph; throws ContractViolation when a referenced
// checkpoint is missing, a chain is cyclic, or generations are not
// contiguous from 1.
ProvenanceGraph replay_ledger(const std::vector<nlohmann::ordered_json>& records);

struct StageReport {
  std::string checkpoint_id;
  std::map<std::string, double> wer;
  double wall_clock_s = 0.0;
};

struct NstResult {
  StageReport stage0;
  std::vector<GenerationReport> generations;
  bool converged = false;
  std::vector<model::Checkpoint> checkpoints;  // stage 0 followed by each generation
};

// Pseudo-labels the pool with `teacher`, mixes in human labels, filters
// pseudo-labeled records by confidence, trains the student from
// `student_init`, evaluates it and appends a record to the ledger.
struct GenerationOutcome {
  GenerationReport report;
  model::Checkpoint student;
};
GenerationOutcome run_generation(const NstConfig& config, std::size_t generation, const model::Checkpoint& teacher,
                                 const model::Checkpoint& student_init, Workspace& ws,
                                 const std::filesystem::path& exp_dir, Ledger& ledger);

// Stage-0 training job: supervised on the labeled stage-0 domains, or JUST
// hydra over every training utterance with labels kept only in those domains.
TrainJob initial_job(const NstConfig& config, const Workspace& ws);

// Stage 0, then generations until max_generations or until the primary-domain
// WER improves on the best earlier result by less than the epsilon. When
// `init_override` is set, the fixed-init policy starts students from it
// instead of the stage-0 model. Layout: exp_dir/config.json,
// exp_dir/ledger.jsonl, exp_dir/gen{N}/{checkpoint.nstc, pseudo.jsonl,
// train.jsonl, report.json}.
NstResult run_nst(const NstConfig& config, Workspace& ws, const std::filesystem::path& exp_dir,
                  const std::optional<model::Checkpoint>& init_override = std::nullopt);

// True when `current` improves on `best_before` by less than epsilon.
bool plateaued(double best_before, double current, double epsilon);

class GenerationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nstlab::nst
