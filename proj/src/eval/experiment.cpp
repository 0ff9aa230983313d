#include "nstlab/eval/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "nstlab/core/hash.hpp"
#include "nstlab/nst/labels.hpp"

namespace nstlab::eval {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using nst::InitialMode;
using nst::NstConfig;

namespace {

const std::string kPrimary = "vs";

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Runs one row; failures are recorded instead of propagated.
template <typename F>
Row guarded(const std::string& label, double x, F&& fn) {
  Row row;
  row.label = label;
  row.x = x;
  try {
    fn(row);
  } catch (const std::exception& e) {
    row.wer.clear();
    row.error = e.what();
  }
  return row;
}

void add_eval(PresetRun& r, const model::Checkpoint& ckpt, Row& row,
              std::optional<decode::DecodeMode> mode = std::nullopt) {
  auto wer = r.ws.wer_by_name(nst::evaluate_checkpoint(r.ws, ckpt, mode, r.options.threads));
  for (const auto& [domain, value] : wer) row.wer[mode ? domain + "@" + decode::to_string(*mode) : domain] = value;
  if (!mode) row.detail["checkpoint_id"] = ckpt.id();
}

model::Checkpoint train_stage0(PresetRun& r, NstConfig config) {
  return nst::run_training(r.ws, nst::initial_job(config, r.ws));
}

NstConfig with_mode(NstConfig c, InitialMode mode, std::vector<std::string> domains = {}) {
  c.initial_mode = mode;
  c.stage0_domains = std::move(domains);
  return c;
}

std::vector<double> primary_series(const std::vector<Row>& rows, const std::vector<std::string>& labels,
                                   const std::string& key = kPrimary) {
  std::vector<double> out;
  for (const auto& l : labels) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) { return r.label == l; });
    if (it == rows.end() || !it->wer.contains(key)) throw std::runtime_error("row " + l + " has no " + key + " result");
    out.push_back(it->wer.at(key));
  }
  return out;
}

// Wraps an assertion body so missing rows produce a failed assertion.
template <typename F>
Assertion assertion(const std::string& name, F&& fn) {
  Assertion a;
  a.name = name;
  try {
    fn(a);
  } catch (const std::exception& e) {
    a.passed = false;
    a.detail = e.what();
  }
  return a;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " -> " : "") + fmt(v[i]);
  return s;
}

double labeled_hours(const nst::Workspace& ws) { return ws.train_subset({}, true).hours(); }

// Fraction of pseudo-label tokens that disagree with the oracle, as WER.
double label_wer(const synth::Manifest& m) {
  WerResult total;
  for (const auto& r : m.records)
    if (r.tokens) total += wer(r.oracle_tokens, *r.tokens);
  return 100.0 * total.wer();
}

// ---------------------------------------------------------------- presets

constexpr std::size_t kGenerations = 4;

std::vector<Row> nst_generation_rows(PresetRun& r) {
  std::vector<Row> rows;
  rows.push_back(guarded("supervised", 0, [&](Row& row) {
    add_eval(r, train_stage0(r, with_mode(r.config, InitialMode::kSupervised)), row);
  }));
  auto cfg = with_mode(r.config, InitialMode::kJustHydra);
  cfg.max_generations = kGenerations;
  cfg.stop_on_plateau = false;
  try {
    auto result = nst::run_nst(cfg, r.ws, r.dir / "nst");
    Row just{.label = "just_hydra", .x = 1, .wer = result.stage0.wer, .error = {}, .detail = {}};
    just.detail["checkpoint_id"] = result.stage0.checkpoint_id;
    rows.push_back(just);
    for (const auto& g : result.generations) {
      Row row{.label = "nst_gen" + std::to_string(g.generation), .x = 1.0 + static_cast<double>(g.generation),
              .wer = g.wer, .error = {}, .detail = {}};
      row.detail["checkpoint_id"] = g.checkpoint_id;
      row.detail["teacher_id"] = g.teacher_id;
      rows.push_back(row);
    }
  } catch (const std::exception& e) {
    rows.push_back(Row{.label = "just_hydra", .x = 1, .wer = {}, .error = e.what(), .detail = {}});
  }
  return rows;
}

std::vector<Assertion> nst_generation_check(const std::vector<Row>& m, const std::vector<SeedRun>&,
                                            const NstConfig& config) {
  std::vector<Assertion> out;
  const std::vector<std::string> chain{"supervised", "just_hydra", "nst_gen1", "nst_gen2"};
  out.push_back(assertion("non_increasing", [&](Assertion& a) {
    auto v = primary_series(m, chain);
    a.passed = std::is_sorted(v.rbegin(), v.rend());
    a.detail = "median vs WER " + join(v);
  }));
  out.push_back(assertion("improvement_at_least_1", [&](Assertion& a) {
    auto v = primary_series(m, chain);
    a.passed = v.front() - v.back() >= 1.0;
    a.detail = "supervised - nst_gen2 = " + fmt(v.front() - v.back());
  }));
  out.push_back(assertion("plateau_detected", [&](Assertion& a) {
    std::vector<std::string> labels{"just_hydra"};
    for (std::size_t g = 1; g <= kGenerations; ++g) labels.push_back("nst_gen" + std::to_string(g));
    auto v = primary_series(m, labels);
    double best = v[0];
    for (std::size_t g = 1; g < v.size(); ++g) {
      if (nst::plateaued(best, v[g], config.convergence_epsilon)) {
        a.passed = true;
        a.detail = "plateau at generation " + std::to_string(g) + " (" + join(v) + ")";
        return;
      }
      best = std::min(best, v[g]);
    }
    a.detail = "still improving: " + join(v);
  }));
  return out;
}

std::vector<Row> stream_rows(PresetRun& r) {
  std::vector<Row> rows;
  const auto& c = r.ws.corpus;
  auto stream_spec = model::student_spec(c.input_dim(), c.num_domains(), static_cast<std::size_t>(c.vocab_size));
  std::optional<model::Checkpoint> baseline;
  rows.push_back(guarded("stream_supervised", 0, [&](Row& row) {
    nst::TrainJob job;
    job.spec = stream_spec;
    job.trainer = r.config.student_trainer;
    job.trainer.seed = r.config.seed * 1000 + 500;
    job.init_seed = r.config.seed + 500;
    job.data = r.ws.train_subset({}, true);
    job.provenance.experiment_id = r.config.experiment_id;
    baseline = nst::run_training(r.ws, job);
    add_eval(r, *baseline, row);
    add_eval(r, *baseline, row, decode::DecodeMode::kCausalOnly);
  }));
  rows.push_back(guarded("stream_nst", 1, [&](Row& row) {
    if (!baseline) throw std::runtime_error("streaming baseline unavailable");
    auto cfg = r.config;
    cfg.student_spec = stream_spec;
    cfg.max_generations = 1;
    auto result = nst::run_nst(cfg, r.ws, r.dir / "stream_nst", baseline);
    add_eval(r, result.checkpoints.back(), row);
    add_eval(r, result.checkpoints.back(), row, decode::DecodeMode::kCausalOnly);
    row.detail["teacher_id"] = result.generations.front().teacher_id;
  }));
  return rows;
}

std::vector<Assertion> stream_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  return {assertion("nst_improves_streaming_student",
                    [&](Assertion& a) {
                      auto v = primary_series(m, {"stream_supervised", "stream_nst"});
                      a.passed = v[1] < v[0];
                      a.detail = join(v);
                    }),
          assertion("cascaded_not_worse_than_causal", [&](Assertion& a) {
            auto cascaded = primary_series(m, {"stream_nst"});
            auto causal = primary_series(m, {"stream_nst"}, kPrimary + "@causal_only");
            a.passed = cascaded[0] <= causal[0];
            a.detail = "cascaded " + fmt(cascaded[0]) + " vs causal " + fmt(causal[0]);
          })};
}

// Teacher for the mixing and threshold sweeps: the first NST generation.
struct NstChain {
  model::Checkpoint stage0;
  model::Checkpoint gen1;
};

NstChain first_generation(PresetRun& r) {
  auto cfg = with_mode(r.config, InitialMode::kJustHydra);
  cfg.max_generations = 1;
  auto result = nst::run_nst(cfg, r.ws, r.dir / "teacher");
  return {result.checkpoints.front(), result.checkpoints.back()};
}

Row sweep_row(PresetRun& r, const std::string& label, double x, const NstConfig& cfg, std::size_t generation,
              const model::Checkpoint& teacher, const model::Checkpoint& init) {
  return guarded(label, x, [&](Row& row) {
    const auto dir = r.dir / label;
    fs::remove(dir / "ledger.jsonl");
    nst::Ledger ledger(dir / "ledger.jsonl");
    auto out = nst::run_generation(cfg, generation, teacher, init, r.ws, dir, ledger);
    row.wer = out.report.wer;
    row.detail["checkpoint_id"] = out.report.checkpoint_id;
    row.detail["human_hours"] = out.report.human_hours;
    row.detail["pseudo_hours"] = out.report.pseudo_hours;
    row.detail["utterances"] = out.report.utterances;
    row.detail["filter_threshold"] = out.report.filter_threshold;
  });
}

std::vector<double> mixing_fractions() { return {0.0, 0.125, 0.25, 0.5, 1.0}; }

std::vector<Row> mixing_rows(PresetRun& r) {
  std::vector<Row> rows;
  NstChain chain;
  try {
    chain = first_generation(r);
  } catch (const std::exception& e) {
    return {Row{.label = "teacher", .x = 0, .wer = {}, .error = e.what(), .detail = {}}};
  }
  const double available = labeled_hours(r.ws);
  std::vector<double> fractions = mixing_fractions();
  if (r.options.human_hours && available > 0) fractions.push_back(std::min(*r.options.human_hours / available, 1.0));
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());
  for (double f : fractions) {
    auto cfg = r.config;
    cfg.human_hours = f * available;
    std::ostringstream pct;
    pct << 100 * f;
    const std::string label = f == 0 ? "human_0" : f == 1 ? "human_all" : "human_" + pct.str() + "pct";
    auto row = sweep_row(r, label, f, cfg, 2, chain.gen1, chain.stage0);
    row.detail["human_hours"] = cfg.human_hours;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Assertion> mixing_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  std::vector<Assertion> out;
  auto ordered = [&] {
    std::vector<const Row*> rows;
    for (const auto& r : m)
      if (r.label.starts_with("human_")) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const Row* a, const Row* b) { return a->x < b->x; });
    if (rows.size() < 3) throw std::runtime_error("mixing sweep needs at least three points");
    for (const auto* r : rows)
      if (!r->wer.contains(kPrimary)) throw std::runtime_error("row " + r->label + " failed");
    return rows;
  };
  out.push_back(assertion("best_is_intermediate_or_ties_zero", [&](Assertion& a) {
    auto rows = ordered();
    double best = 1e300;
    for (const auto* r : rows) best = std::min(best, r->wer.at(kPrimary));
    bool intermediate = false;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i) intermediate |= rows[i]->wer.at(kPrimary) == best;
    a.passed = intermediate || rows.front()->wer.at(kPrimary) == best;
    std::vector<double> v;
    for (const auto* r : rows) v.push_back(r->wer.at(kPrimary));
    a.detail = "median vs WER by human-label fraction " + join(v);
  }));
  out.push_back(assertion("all_human_not_strictly_best", [&](Assertion& a) {
    auto rows = ordered();
    double others = 1e300;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) others = std::min(others, rows[i]->wer.at(kPrimary));
    a.passed = rows.back()->wer.at(kPrimary) >= others;
    a.detail = "all-human " + fmt(rows.back()->wer.at(kPrimary)) + " vs best other " + fmt(others);
  }));
  return out;
}

const std::vector<std::string> kInitRows{"ood_supervised", "in_domain_supervised", "just_hydra"};
constexpr std::size_t kInitGenerations = 3;

std::vector<Row> student_init_rows(PresetRun& r) {
  // Every init learns from the same teachers: stage 0 of the JUST hydra chain,
  // then that chain's generations.
  auto cfg = with_mode(r.config, InitialMode::kJustHydra);
  cfg.max_generations = kInitGenerations;
  cfg.stop_on_plateau = false;
  std::optional<nst::NstResult> chain;
  Row just = guarded("just_hydra", static_cast<double>(kInitRows.size() - 1), [&](Row& row) {
    chain = nst::run_nst(cfg, r.ws, r.dir / "just_hydra");
    row.detail["init_wer"] = chain->stage0.wer;
    json gens = json::array();
    for (const auto& g : chain->generations) gens.push_back(g.wer);
    row.detail["generations"] = gens;
    row.detail["checkpoint_id"] = chain->generations.back().checkpoint_id;
    row.wer = chain->generations.back().wer;
  });
  std::vector<Row> rows;
  for (const auto& name : kInitRows) {
    if (name == "just_hydra") {
      rows.push_back(just);
      continue;
    }
    rows.push_back(guarded(name, static_cast<double>(rows.size()), [&](Row& row) {
      if (!chain) throw std::runtime_error("teacher chain failed");
      const auto init = train_stage0(
          r, name == "ood_supervised" ? with_mode(r.config, InitialMode::kSupervised, {"mf"})
                                      : with_mode(r.config, InitialMode::kSupervised));
      row.detail["init_wer"] = r.ws.wer_by_name(nst::evaluate_checkpoint(r.ws, init, std::nullopt, r.options.threads));
      const auto dir = r.dir / name;
      fs::remove(dir / "ledger.jsonl");
      nst::Ledger ledger(dir / "ledger.jsonl");
      ledger.append(json{{"kind", "external"}, {"checkpoint_id", init.id()}, {"role", "student_init"}});
      json gens = json::array();
      for (std::size_t g = 1; g <= kInitGenerations; ++g) {
        ledger.append(json{{"kind", "external"}, {"checkpoint_id", chain->checkpoints[g - 1].id()}, {"role", "teacher"}});
        auto out = nst::run_generation(cfg, g, chain->checkpoints[g - 1], init, r.ws, dir, ledger);
        gens.push_back(out.report.wer);
        row.wer = out.report.wer;
        row.detail["checkpoint_id"] = out.report.checkpoint_id;
      }
      row.detail["generations"] = gens;
    }));
  }
  return rows;
}

std::vector<Assertion> student_init_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  return {assertion("final_wer_gap_at_most_0.5", [&](Assertion& a) {
    auto v = primary_series(m, kInitRows);
    const double gap = *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    a.passed = gap <= 0.5;
    a.detail = "final vs WER " + join(v) + ", gap " + fmt(gap);
  })};
}

std::vector<Row> ood_rows(PresetRun& r) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> pools{
      {"pool_vs", {"vs", "vs_unsup"}}, {"pool_vs_mf", {"vs", "vs_unsup", "mf"}}, {"pool_all", {}}};
  std::vector<Row> rows;
  for (const auto& [name, domains] : pools) {
    rows.push_back(guarded(name, static_cast<double>(rows.size()), [&, &domains = domains](Row& row) {
      auto cfg = with_mode(r.config, InitialMode::kJustHydra);
      cfg.max_generations = 1;
      cfg.pseudo_domains = domains;
      auto result = nst::run_nst(cfg, r.ws, r.dir / name);
      row.wer = result.generations.back().wer;
      row.detail["pseudo_hours"] = result.generations.back().pseudo_hours;
      row.detail["checkpoint_id"] = result.generations.back().checkpoint_id;
    }));
  }
  return rows;
}

std::vector<Assertion> ood_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  return {assertion("new_domain_data_helps_new_domain", [&](Assertion& a) {
    auto v = primary_series(m, {"pool_vs", "pool_all"}, "vs_new");
    a.passed = v[1] <= v[0];
    a.detail = "vs_new WER " + join(v);
  })};
}

std::vector<Row> sup_teacher_rows(PresetRun& r) {
  std::vector<Row> rows;
  auto cfg = with_mode(r.config, InitialMode::kSupervised);
  cfg.max_generations = 2;
  cfg.stop_on_plateau = false;
  try {
    auto result = nst::run_nst(cfg, r.ws, r.dir / "nst");
    rows.push_back(Row{.label = "supervised", .x = 0, .wer = result.stage0.wer, .error = {}, .detail = {}});
    for (const auto& g : result.generations)
      rows.push_back(Row{.label = "nst_gen" + std::to_string(g.generation), .x = static_cast<double>(g.generation),
                         .wer = g.wer, .error = {}, .detail = {{"checkpoint_id", g.checkpoint_id}}});
  } catch (const std::exception& e) {
    rows.push_back(Row{.label = "supervised", .x = 0, .wer = {}, .error = e.what(), .detail = {}});
  }
  return rows;
}

std::vector<Assertion> sup_teacher_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  return {assertion("nst_improves_supervised_teacher", [&](Assertion& a) {
    auto v = primary_series(m, {"supervised", "nst_gen1", "nst_gen2"});
    a.passed = v[2] < v[0];
    a.detail = join(v);
  })};
}

std::vector<double> label_fractions() { return {0.25, 0.5, 1.0}; }

std::vector<Row> label_fraction_rows(PresetRun& r) {
  std::vector<Row> rows;
  for (double f : label_fractions()) {
    for (auto mode : {InitialMode::kSupervised, InitialMode::kJustHydra}) {
      auto cfg = with_mode(r.config, mode);
      cfg.stage0_label_fraction = f;
      rows.push_back(guarded(nst::to_string(mode) + "_" + fmt(f), f, [&](Row& row) {
        auto ckpt = train_stage0(r, cfg);
        add_eval(r, ckpt, row);
      }));
    }
  }
  return rows;
}

std::vector<Assertion> label_fraction_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  return {assertion("just_hydra_helps_with_fewest_labels", [&](Assertion& a) {
    const auto f = fmt(label_fractions().front());
    auto v = primary_series(m, {"supervised_" + f, "just_hydra_" + f});
    a.passed = v[1] <= v[0];
    a.detail = "supervised vs just_hydra " + join(v);
  })};
}

std::vector<double> thresholds() { return {0.0, 0.7, 0.8, 0.85}; }
constexpr std::size_t kWeakTeacherSteps = 800;

std::vector<Row> conf_sweep_rows(PresetRun& r) {
  std::vector<Row> rows;
  NstChain chain;
  model::Checkpoint weak;
  try {
    chain = first_generation(r);
    auto weak_cfg = with_mode(r.config, InitialMode::kSupervised);
    weak_cfg.stage0_trainer.steps = kWeakTeacherSteps;
    weak = train_stage0(r, weak_cfg);
  } catch (const std::exception& e) {
    return {Row{.label = "teacher", .x = 0, .wer = {}, .error = e.what(), .detail = {}}};
  }
  rows.push_back(guarded("teacher_weak", -1, [&](Row& row) { add_eval(r, weak, row); }));
  rows.push_back(guarded("teacher_strong", -1, [&](Row& row) { add_eval(r, chain.gen1, row); }));
  auto sweep = thresholds();
  if (r.options.threshold) sweep.push_back(*r.options.threshold);
  std::sort(sweep.begin(), sweep.end());
  sweep.erase(std::unique(sweep.begin(), sweep.end()), sweep.end());
  for (const auto& [name, teacher, generation] :
       {std::tuple{"weak", &weak, std::size_t{1}}, std::tuple{"strong", &chain.gen1, std::size_t{2}}}) {
    for (double t : sweep) {
      auto cfg = r.config;
      cfg.filter_threshold = t;
      rows.push_back(sweep_row(r, std::string(name) + "_t" + fmt(t), t, cfg, generation, *teacher, chain.stage0));
    }
  }
  return rows;
}

std::vector<Assertion> conf_sweep_check(const std::vector<Row>& m, const std::vector<SeedRun>&,
                                        const NstConfig& config) {
  auto sweep_of = [&](const std::string& prefix) {
    std::vector<std::pair<double, double>> points;
    for (const auto& r : m)
      if (r.label.starts_with(prefix + "_t")) {
        if (!r.wer.contains(kPrimary)) throw std::runtime_error("row " + r.label + " failed");
        points.emplace_back(r.x, r.wer.at(kPrimary));
      }
    std::sort(points.begin(), points.end());
    if (points.size() < 2 || points.front().first != 0.0) throw std::runtime_error(prefix + " sweep incomplete");
    return points;
  };
  auto describe = [](const std::vector<std::pair<double, double>>& p) {
    std::string s;
    for (const auto& [t, w] : p) s += (s.empty() ? "" : ", ") + fmt(t) + ":" + fmt(w);
    return s;
  };
  return {assertion("weak_teacher_some_threshold_helps",
                    [&](Assertion& a) {
                      auto p = sweep_of("weak");
                      a.passed = std::any_of(p.begin() + 1, p.end(), [&](const auto& q) { return q.second < p[0].second; });
                      a.detail = describe(p);
                    }),
          assertion("strong_teacher_no_threshold_beats_epsilon", [&](Assertion& a) {
            auto p = sweep_of("strong");
            a.passed = std::none_of(p.begin() + 1, p.end(),
                                    [&](const auto& q) { return p[0].second - q.second > config.convergence_epsilon; });
            a.detail = describe(p) + " (epsilon " + fmt(config.convergence_epsilon) + ")";
          })};
}

std::vector<Row> human_vs_pseudo_rows(PresetRun& r) {
  std::vector<Row> rows;
  std::optional<model::Checkpoint> teacher;
  rows.push_back(guarded("clean_teacher", 0, [&](Row& row) {
    nst::TrainJob job;
    job.spec = r.config.teacher_spec;
    job.trainer = r.config.stage0_trainer;
    job.trainer.weights = {1.0, 0.0, 0.0};
    job.trainer.seed = r.config.seed * 1000 + 700;
    job.init_seed = r.config.seed + 700;
    job.provenance.experiment_id = r.config.experiment_id;
    job.data = r.ws.train_subset({"vs", "vs_unsup"}, false);
    for (auto& rec : job.data.records) {
      rec.tokens = rec.oracle_tokens;
      rec.label_source = synth::LabelSource::kHuman;
    }
    teacher = nst::run_training(r.ws, job);
    add_eval(r, *teacher, row);
  }));
  auto human = r.ws.train_subset({"vs"}, true);
  synth::Manifest pseudo;
  if (teacher) {
    try {
      pseudo = nst::pseudo_label(*teacher, human, r.ws.features, r.ws.front_end, {}, r.options.threads).manifest;
    } catch (const std::exception&) {
      teacher.reset();
    }
  }
  for (const auto& [name, data] : {std::pair{"student_pseudo", &pseudo}, std::pair{"student_human", &human}}) {
    rows.push_back(guarded(name, static_cast<double>(rows.size()), [&, data = data](Row& row) {
      if (!teacher) throw std::runtime_error("clean teacher unavailable");
      nst::TrainJob job;
      job.spec = r.config.student_spec;
      job.trainer = r.config.student_trainer;
      job.trainer.seed = r.config.seed * 1000 + 701;
      job.init_seed = r.config.seed + 701;
      job.provenance.experiment_id = r.config.experiment_id;
      job.data = *data;
      add_eval(r, nst::run_training(r.ws, job), row);
      row.detail["label_wer"] = label_wer(*data);
    }));
  }
  return rows;
}

std::vector<Assertion> human_vs_pseudo_check(const std::vector<Row>& m, const std::vector<SeedRun>&, const NstConfig&) {
  return {assertion("pseudo_student_beats_human_student", [&](Assertion& a) {
    auto v = primary_series(m, {"student_pseudo", "student_human"});
    a.passed = v[0] < v[1];
    a.detail = "pseudo " + fmt(v[0]) + " vs human " + fmt(v[1]);
  })};
}

std::vector<ExperimentPreset> build_presets() {
  auto none = [](NstConfig&) {};
  std::vector<ExperimentPreset> p;
  p.push_back({"table2_nst_generations",
               "Supervised baseline, JUST hydra initial model, then NST generations with the JUST model as the fixed "
               "student init and the previous generation as teacher.",
               json::object(), none, nst_generation_rows, nst_generation_check,
               {"WER by stage", "stage (0 supervised, 1 JUST, 1+g generation g)", {"vs", "mf", "vs_new"}}});
  p.push_back({"table3_stream",
               "Streaming student (causal encoder plus non-causal cascade) trained on human labels, then one NST "
               "generation from the JUST teacher; decoded with and without the second pass.",
               json::object(), none, stream_rows, stream_check,
               {"Streaming student", "row", {"vs", "vs@causal_only"}}});
  p.push_back({"table4_mixing",
               "Second-generation students trained on pseudo labels with increasing amounts of human labels mixed "
               "in, from 0 to all labeled hours.",
               json::object(), none, mixing_rows, mixing_check, {"WER vs human-label fraction", "fraction of labeled hours", {"vs", "mf"}}});
  p.push_back({"table5_student_init",
               "NST from three student inits: out-of-domain supervised, in-domain supervised and JUST hydra; final "
               "generation WER compared.",
               json::object(), none, student_init_rows, student_init_check,
               {"Final WER by student init", "init (0 ood, 1 in-domain, 2 JUST)", {"vs", "mf"}}});
  p.push_back({"table6_ood",
               "One NST generation with the pseudo-label pool restricted to VS-like data, extended with MF-like "
               "data, and extended with the shifted new domain.",
               json::object(), none, ood_rows, ood_check, {"WER by pseudo-label pool", "pool", {"vs", "mf", "vs_new"}}});
  p.push_back({"tableA1_sup_teacher",
               "NST generations starting from a supervised teacher instead of JUST hydra.", json::object(), none,
               sup_teacher_rows, sup_teacher_check, {"WER by generation", "generation", {"vs", "mf"}}});
  p.push_back({"tableA2_label_fraction",
               "Supervised and JUST hydra initial models with 25%, 50% and 100% of the labeled utterances.",
               json::object(), none, label_fraction_rows, label_fraction_check,
               {"WER vs labeled fraction", "labeled fraction", {"vs"}}});
  p.push_back({"tableA3_conf_sweep",
               "Student WER against the confidence filter threshold, for an undertrained supervised teacher and for "
               "the first NST generation as teacher.",
               json::object(), none, conf_sweep_rows, conf_sweep_check,
               {"WER vs confidence threshold", "threshold", {"vs"}}});
  p.push_back({"human_vs_pseudo",
               "A teacher trained on clean labels pseudo-labels the human-labeled VS utterances; identically "
               "configured students train on those pseudo labels or on the inconsistent human labels.",
               json::object(), none, human_vs_pseudo_rows, human_vs_pseudo_check,
               {"Human vs pseudo labels", "row", {"vs"}}});
  return p;
}

json seedless(json j) {
  if (j.contains("corpus")) j["corpus"].erase("seed");
  if (j.contains("nst")) j["nst"].erase("seed");
  return j;
}

}  // namespace

const std::vector<ExperimentPreset>& presets() {
  static const std::vector<ExperimentPreset> all = build_presets();
  return all;
}

const ExperimentPreset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw UnknownPreset("unknown preset: " + name);
}

bool ExperimentReport::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
}

synth::CorpusSpec desk_corpus(std::uint64_t seed) {
  auto c = synth::default_corpus_spec();
  c.seed = seed;
  return c;
}

nst::NstConfig desk_config(const synth::CorpusSpec& corpus, std::uint64_t seed) {
  auto c = nst::default_nst_config(corpus);
  c.experiment_id = "desk";
  c.seed = seed;
  return c;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<Row> median_rows(const std::vector<SeedRun>& runs) {
  std::vector<Row> out;
  for (const auto& run : runs) {
    for (const auto& row : run.rows) {
      if (std::none_of(out.begin(), out.end(), [&](const Row& r) { return r.label == row.label; }))
        out.push_back(Row{.label = row.label, .x = row.x, .wer = {}, .error = {}, .detail = json::object()});
    }
  }
  for (auto& m : out) {
    std::map<std::string, std::vector<double>> values;
    std::size_t failed = 0;
    for (const auto& run : runs) {
      for (const auto& row : run.rows) {
        if (row.label != m.label) continue;
        if (row.error) ++failed;
        for (const auto& [k, v] : row.wer) values[k].push_back(v);
      }
    }
    for (auto& [k, v] : values) m.wer[k] = median(v);
    if (failed) m.detail["failed_seeds"] = failed;
    if (m.wer.empty()) m.error = "no seed produced this row";
  }
  return out;
}

ExperimentReport run_experiment(const std::string& name, const ExperimentOptions& options) {
  const auto& preset = find_preset(name);
  if (options.num_seeds == 0) throw core::ContractViolation("run_experiment: num_seeds must be positive");
  const auto start = std::chrono::steady_clock::now();
  const double cpu0 = cpu_seconds();

  auto config_for = [&](std::uint64_t seed) {
    json corpus = desk_corpus(seed);
    corpus.merge_patch(preset.corpus_overrides);
    if (options.overrides.contains("corpus")) corpus.merge_patch(options.overrides.at("corpus"));
    corpus["seed"] = seed;
    auto corpus_spec = corpus.get<synth::CorpusSpec>();
    corpus_spec.validate();
    auto nst_config = desk_config(corpus_spec, seed);
    preset.configure(nst_config);
    json nst_json = nst_config;
    if (options.overrides.contains("nst")) nst_json.merge_patch(options.overrides.at("nst"));
    nst_json["seed"] = seed;
    nst_config = nst_json.get<NstConfig>();
    nst_config.threads = options.threads;
    nst_config.validate();
    return std::pair{corpus_spec, nst_config};
  };

  ExperimentReport report;
  report.preset = preset.name;
  report.comparison = preset.comparison;
  report.plot = preset.plot;
  {
    auto [corpus_spec, nst_config] = config_for(options.seed);
    report.config = seedless(json{{"preset", preset.name}, {"corpus", corpus_spec}, {"nst", nst_config}});
    report.config["seeds"] = json::array();
    for (std::size_t i = 0; i < options.num_seeds; ++i) report.config["seeds"].push_back(options.seed + i);
    if (options.threshold) report.config["threshold"] = *options.threshold;
    if (options.human_hours) report.config["human_hours"] = *options.human_hours;
    report.config_hash = core::short_hash(report.config.dump());
  }

  NstConfig first_config;
  for (std::size_t i = 0; i < options.num_seeds; ++i) {
    const std::uint64_t seed = options.seed + i;
    auto [corpus_spec, nst_config] = config_for(seed);
    if (i == 0) first_config = nst_config;
    SeedRun run;
    run.seed = seed;
    run.corpus_hash = corpus_spec.hash();
    const double cpu_start = cpu_seconds();
    const auto corpus_dir = options.out_dir / "corpora" / run.corpus_hash;
    try {
      if (!fs::exists(corpus_dir / "corpus.json")) {
        fs::remove_all(corpus_dir);
        synth::generate_corpus(corpus_spec, corpus_dir);
      }
      auto ws = nst::Workspace::open(
          corpus_dir, options.use_cache ? std::optional<fs::path>(options.out_dir / "cache") : std::nullopt);
      PresetRun pr{ws, nst_config, options.out_dir / preset.name / ("seed" + std::to_string(seed)), options};
      run.rows = preset.rows(pr);
    } catch (const std::exception& e) {
      run.rows.push_back(Row{.label = "setup", .x = 0, .wer = {}, .error = e.what(), .detail = {}});
    }
    run.cpu_seconds = cpu_seconds() - cpu_start;
    report.runs.push_back(std::move(run));
  }
  report.median = median_rows(report.runs);
  report.assertions = preset.check(report.median, report.runs, first_config);
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.cpu_seconds = cpu_seconds() - cpu0;
  return report;
}

// ---------------------------------------------------------------- output

namespace {

json row_json(const Row& r) {
  json j{{"label", r.label}, {"x", r.x}, {"wer", r.wer}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  j["detail"] = r.detail;
  return j;
}

Row row_from(const json& j) {
  Row r;
  r.label = j.at("label").get<std::string>();
  r.x = j.at("x").get<double>();
  r.wer = j.at("wer").get<std::map<std::string, double>>();
  if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  r.detail = j.at("detail");
  return r;
}

std::vector<std::string> series_of(const ExperimentReport& r) {
  return r.plot.series.empty() ? std::vector<std::string>{kPrimary} : r.plot.series;
}

}  // namespace

json to_json(const ExperimentReport& r) {
  json j{{"preset", r.preset}, {"comparison", r.comparison}, {"config_hash", r.config_hash}, {"config", r.config}};
  json runs = json::array();
  for (const auto& run : r.runs) {
    json rows = json::array();
    for (const auto& row : run.rows) rows.push_back(row_json(row));
    runs.push_back({{"seed", run.seed}, {"corpus_hash", run.corpus_hash}, {"cpu_seconds", run.cpu_seconds}, {"rows", rows}});
  }
  j["runs"] = runs;
  json median = json::array();
  for (const auto& row : r.median) median.push_back(row_json(row));
  j["median"] = median;
  json assertions = json::array();
  for (const auto& a : r.assertions) assertions.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  j["assertions"] = assertions;
  j["passed"] = r.passed();
  j["plot"] = {{"title", r.plot.title}, {"x_label", r.plot.x_label}, {"series", r.plot.series}};
  j["wall_clock_s"] = r.wall_clock_s;
  j["cpu_seconds"] = r.cpu_seconds;
  return j;
}

ExperimentReport report_from_json(const json& j) {
  ExperimentReport r;
  r.preset = j.at("preset").get<std::string>();
  r.comparison = j.at("comparison").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.config = j.at("config");
  for (const auto& run : j.at("runs")) {
    SeedRun s;
    s.seed = run.at("seed").get<std::uint64_t>();
    s.corpus_hash = run.at("corpus_hash").get<std::string>();
    s.cpu_seconds = run.at("cpu_seconds").get<double>();
    for (const auto& row : run.at("rows")) s.rows.push_back(row_from(row));
    r.runs.push_back(std::move(s));
  }
  for (const auto& row : j.at("median")) r.median.push_back(row_from(row));
  for (const auto& a : j.at("assertions"))
    r.assertions.push_back({a.at("name").get<std::string>(), a.at("passed").get<bool>(), a.at("detail").get<std::string>()});
  const auto& plot = j.at("plot");
  r.plot = {plot.at("title").get<std::string>(), plot.at("x_label").get<std::string>(),
            plot.at("series").get<std::vector<std::string>>()};
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  r.cpu_seconds = j.at("cpu_seconds").get<double>();
  return r;
}

std::string render_text(const ExperimentReport& r) {
  std::ostringstream os;
  os << r.preset << "  (config " << r.config_hash << ")\n" << r.comparison << "\n\n";
  std::set<std::string> keys;
  for (const auto& row : r.median)
    for (const auto& [k, v] : row.wer) keys.insert(k);
  std::size_t label_width = 5;
  for (const auto& row : r.median) label_width = std::max(label_width, row.label.size());
  os << std::left << std::setw(static_cast<int>(label_width) + 2) << "row";
  for (const auto& k : keys) os << std::right << std::setw(std::max<int>(10, static_cast<int>(k.size()) + 2)) << k;
  os << "\n";
  for (const auto& row : r.median) {
    os << std::left << std::setw(static_cast<int>(label_width) + 2) << row.label;
    for (const auto& k : keys) {
      const int w = std::max<int>(10, static_cast<int>(k.size()) + 2);
      os << std::right << std::setw(w) << (row.wer.contains(k) ? fmt(row.wer.at(k)) : "-");
    }
    if (row.error) os << "  error: " << *row.error;
    os << "\n";
  }
  os << "\nmedian of " << r.runs.size() << " seed(s); corpus hashes:";
  for (const auto& run : r.runs) os << " " << run.corpus_hash;
  os << "\n";
  for (const auto& run : r.runs)
    for (const auto& row : run.rows)
      if (row.error) os << "seed " << run.seed << " row " << row.label << " failed: " << *row.error << "\n";
  os << "\n";
  for (const auto& a : r.assertions) os << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.detail << "\n";
  os << "\nwall clock " << fmt(r.wall_clock_s, 1) << " s, cpu " << fmt(r.cpu_seconds, 1) << " s\n";
  return os.str();
}

std::string render_tsv(const ExperimentReport& r) {
  std::ostringstream os;
  const auto series = series_of(r);
  os << "x\tlabel";
  for (const auto& s : series) os << "\t" << s;
  os << "\n";
  auto rows = r.median;
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.x < b.x; });
  for (const auto& row : rows) {
    os << row.x << "\t" << row.label;
    for (const auto& s : series) os << "\t" << (row.wer.contains(s) ? fmt(row.wer.at(s), 4) : "nan");
    os << "\n";
  }
  return os.str();
}

std::string render_svg(const ExperimentReport& r) {
  const double width = 640, height = 400, left = 60, right = 150, top = 40, bottom = 50;
  const auto series = series_of(r);
  auto rows = r.median;
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.x < b.x; });
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& row : rows)
    for (const auto& s : series)
      if (row.wer.contains(s)) {
        xmin = std::min(xmin, row.x);
        xmax = std::max(xmax, row.x);
        ymin = std::min(ymin, row.wer.at(s));
        ymax = std::max(ymax, row.wer.at(s));
      }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << r.plot.title << "</text>\n";
  if (xmin > xmax) {
    os << "<text x=\"" << width / 2 << "\" y=\"" << height / 2 << "\" text-anchor=\"middle\">no data</text>\n</svg>\n";
    return os.str();
  }
  if (xmax == xmin) xmax = xmin + 1;
  const double pad = std::max(0.5, 0.1 * (ymax - ymin));
  ymin = std::max(0.0, ymin - pad);
  ymax += pad;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(y, 1)
       << "</text>\n";
  }
  for (const auto& row : rows)
    os << "<text x=\"" << px(row.x) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << fmt(row.x, 3) << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << r.plot.x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">WER (%)</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 5];
    std::string points;
    for (const auto& row : rows) {
      if (!row.wer.contains(series[s])) continue;
      points += fmt(px(row.x), 1) + "," + fmt(py(row.wer.at(series[s])), 1) + " ";
      os << "<circle cx=\"" << px(row.x) << "\" cy=\"" << py(row.wer.at(series[s])) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"" << points << "\"/>\n";
    os << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 16 * (s + 1) << "\" font-size=\"12\" fill=\"" << color
       << "\">" << series[s] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_report(const ExperimentReport& r, const fs::path& dir) {
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "report.txt", render_text(r));
  write_text(dir / "plot.tsv", render_tsv(r));
  write_text(dir / "plot.svg", render_svg(r));
}

}  // namespace nstlab::eval
