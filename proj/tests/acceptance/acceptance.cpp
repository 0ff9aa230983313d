// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is 0 only when all selected criteria pass.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nstlab/core/grad_check.hpp"
#include "nstlab/eval/experiment.hpp"
#include "nstlab/eval/wer.hpp"
#include "nstlab/loss/just.hpp"
#include "nstlab/loss/rnnt.hpp"
#include "nstlab/model/checkpoint.hpp"
#include "nstlab/model/network.hpp"
#include "nstlab/nst/pipeline.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace nstlab;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

model::ModelSpec desk_teacher() {
  auto c = eval::desk_corpus(1);
  return model::teacher_spec(c.input_dim(), c.num_domains(), static_cast<std::size_t>(c.vocab_size));
}

model::ModelSpec desk_student() {
  auto c = eval::desk_corpus(1);
  return model::student_spec(c.input_dim(), c.num_domains(), static_cast<std::size_t>(c.vocab_size));
}

template <typename T>
core::Tensor<T> random_input(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  core::Prng rng(seed, 91);
  core::Tensor<T> t({frames, dim});
  for (auto& x : t.data) x = static_cast<T>(rng.normal());
  return t;
}

Outcome rnnt_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  core::Prng rng(11, 1);
  double worst_loss = 0, worst_cos = 1;
  const std::size_t instances = 200;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto t = static_cast<std::size_t>(rng.range(1, 4));
    const auto u = static_cast<std::size_t>(rng.range(0, 3));
    const auto v = static_cast<std::size_t>(rng.range(1, 5));
    auto lp = oracle::random_log_probs(t, u, v, rng);
    auto labels = oracle::random_labels(u, v, rng);
    auto dp = loss::rnnt_loss(lp, labels);
    auto ex = oracle::enumerate_alignments(lp, labels);
    worst_loss = std::max(worst_loss, std::abs(dp.loss - ex.loss));
    worst_cos = std::min(worst_cos, oracle::cosine(dp.grad.data, ex.grad.data));
  }
  const double elapsed = seconds_since(t0);
  return {worst_loss <= 1e-6 && worst_cos > 1 - 1e-6 && elapsed < 10.0,
          std::to_string(instances) + " instances, max |loss diff| " + fmt(worst_loss) + ", min grad cosine 1-" +
              fmt(1 - worst_cos) + ", " + fmt(elapsed) + " s"};
}

Outcome gradient_integrity() {
  std::string detail;
  bool ok = true;
  for (auto kind : {model::JointKind::kRnnt, model::JointKind::kHat}) {
    auto spec = desk_teacher();
    spec.joint.kind = kind;
    auto params = model::init_params(spec, 31).cast<double>();
    const std::vector<std::pair<std::size_t, std::vector<int>>> batch{{7, {3, 9, 14}}, {5, {22, 1}}};
    std::vector<core::Tensor<double>> inputs;
    for (std::size_t i = 0; i < batch.size(); ++i) inputs.push_back(random_input<double>(batch[i].first, spec.input_dim, 40 + i));
    auto f = [&](const core::ParamVars<double>& p) {
      core::Var<double> total;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        auto enc = model::encode(spec, p, core::Var<double>::constant(inputs[i]));
        auto l = loss::transducer_loss(spec, p, enc.rnnt, batch[i].second);
        total = i == 0 ? l : core::add(total, l);
      }
      return total;
    };
    auto r = core::grad_check<double>(f, params, {.epsilon = 1e-4, .max_entries_per_param = 6, .seed = 5});
    ok &= !r.failed && r.max_relative_error < 1e-5;
    detail += (detail.empty() ? "" : "; ") + model::to_string(kind) + ": max rel err " + fmt(r.max_relative_error) + " over " +
              std::to_string(r.entries_checked) + " entries (worst " + r.worst_param + ")" + (r.failed ? " " + r.failure : "");
  }
  return {ok, detail};
}

Outcome streaming_causality() {
  auto spec = desk_student();
  auto params = model::init_params(spec, 33);
  core::ParamVars<float> p(params, false);
  const std::size_t frames = 14;
  auto base_in = random_input<float>(frames, spec.input_dim, 34);
  auto base = model::encode(spec, p, core::Var<float>::constant(base_in));
  const auto lookahead = static_cast<std::size_t>(spec.cascade_lookahead());
  core::Prng rng(35, 1);
  std::size_t checks = 0;
  bool ok = true;
  auto perturbed = [&](std::size_t first) {
    auto in = base_in;
    for (std::size_t r = first; r < frames; ++r)
      for (std::size_t j = 0; j < spec.input_dim; ++j) in.at(r, j) += static_cast<float>(rng.normal() * 5.0);
    return model::encode(spec, p, core::Var<float>::constant(in));
  };
  for (std::size_t t = 0; t + 1 < frames; ++t) {
    for (int trial = 0; trial < 3; ++trial) {
      auto out = perturbed(t + 1);
      for (std::size_t r = 0; r <= t; ++r)
        for (std::size_t j = 0; j < spec.encoder.model_dim; ++j) ok &= out.rnnt.value().at(r, j) == base.rnnt.value().at(r, j);
      ++checks;
      if (t + lookahead + 1 < frames) {
        auto second = perturbed(t + lookahead + 1);
        for (std::size_t r = 0; r <= t; ++r)
          for (std::size_t j = 0; j < spec.encoder.model_dim; ++j)
            ok &= second.second_pass.value().at(r, j) == base.second_pass.value().at(r, j);
        ++checks;
      }
    }
  }
  return {ok, std::to_string(checks) + " perturbations; causal pass and second pass (R = " + std::to_string(lookahead) +
                  " frames) " + (ok ? "bit-identical" : "changed")};
}

Outcome hydra_routing() {
  auto spec = desk_teacher();
  auto params = model::init_params(spec, 36);
  std::vector<loss::Example<float>> batch(2);
  batch[0].input = random_input<float>(12, spec.input_dim, 37);
  batch[0].tokens = std::vector<int>{1, 5, 9};
  batch[1].input = random_input<float>(10, spec.input_dim, 38);
  batch[1].tokens = std::vector<int>{7};
  loss::SslConfig ssl;
  ssl.distractors = 3;
  ssl.mask_prob = 0.3;
  auto grads_for = [&](loss::JustWeights w) {
    core::ParamVars<float> p(params);
    core::Prng rng(2, 2);
    auto out = loss::just_loss<float>(spec, p, batch, w, ssl, rng);
    core::backward(out.total);
    return p.gradients();
  };
  auto ssl_grads = grads_for({0.0, 1.0, 1.0});
  auto sup_grads = grads_for({1.0, 0.0, 0.0});
  auto zero = [](const core::Tensor<float>& g) {
    return std::all_of(g.data.begin(), g.data.end(), [](float v) { return v == 0.0f; });
  };
  bool ok = true, ssl_trunk = false, sup_trunk = false;
  std::size_t rnnt_private = 0, w2v_private = 0;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& name = params.entries()[i].name;
    if (name.starts_with("rnnt.")) ok &= zero(ssl_grads[i]), ++rnnt_private;
    if (name.starts_with("w2v.")) ok &= zero(sup_grads[i]), ++w2v_private;
    if (name.starts_with("trunk.")) {
      ssl_trunk |= !zero(ssl_grads[i]);
      sup_trunk |= !zero(sup_grads[i]);
    }
  }
  ok &= ssl_trunk && sup_trunk && rnnt_private > 0 && w2v_private > 0;
  return {ok, std::to_string(rnnt_private) + " RNN-T-private and " + std::to_string(w2v_private) +
                  " ssl-private tensors isolated; trunk receives both: " + (ssl_trunk && sup_trunk ? "yes" : "no")};
}

Outcome wer_oracle() {
  using oracle::Seq;
  std::vector<Seq> small{{}};
  for (std::size_t len = 1; len <= 3; ++len) {
    std::vector<Seq> next;
    for (const auto& s : small)
      if (s.size() == len - 1)
        for (int v = 1; v <= 4; ++v) {
          auto t = s;
          t.push_back(v);
          next.push_back(t);
        }
    small.insert(small.end(), next.begin(), next.end());
  }
  std::size_t pairs = 0, mismatches = 0;
  auto check = [&](const Seq& a, const Seq& b) {
    ++pairs;
    auto r = eval::wer(a, b);
    const bool consistent = r.errors() == oracle::edit_distance_recursive(a, 0, b, 0) &&
                            a.size() - r.deletions + r.insertions == b.size() && r.ref_tokens == a.size();
    mismatches += !consistent;
  };
  for (const auto& a : small)
    for (const auto& b : small) check(a, b);
  core::Prng rng(12, 1);
  for (int i = 0; i < 1000; ++i) {
    Seq a(static_cast<std::size_t>(rng.range(0, 6))), b(static_cast<std::size_t>(rng.range(0, 6)));
    for (auto& x : a) x = rng.range(1, 4);
    for (auto& x : b) x = rng.range(1, 4);
    check(a, b);
  }
  return {mismatches == 0, std::to_string(pairs) + " pairs (exhaustive up to length 3, 1000 random up to 6), " +
                               std::to_string(mismatches) + " mismatches"};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome serialization(const fs::path& work) {
  const auto dir = work / "serialization";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  std::string detail;

  model::Checkpoint ckpt{desk_teacher(), model::init_params(desk_teacher(), 41), 7, {"acceptance", {}, {}, {}}};
  model::save_checkpoint(ckpt, dir / "a.nstc");
  model::save_checkpoint(model::load_checkpoint(dir / "a.nstc"), dir / "b.nstc");
  const bool ckpt_ok = read_bytes(dir / "a.nstc") == read_bytes(dir / "b.nstc");
  ok &= ckpt_ok;
  detail += std::string("checkpoint ") + (ckpt_ok ? "identical" : "differs");

  auto corpus = eval::desk_corpus(1);
  for (auto& d : corpus.domains) d.train_count = std::min<std::size_t>(d.train_count, 12), d.eval_count = std::min<std::size_t>(d.eval_count, 6);
  synth::generate_corpus(corpus, dir / "corpus");
  synth::write_manifest(synth::read_manifest(dir / "corpus" / "train.jsonl"), dir / "train_copy.jsonl");
  const bool manifest_ok = read_bytes(dir / "corpus" / "train.jsonl") == read_bytes(dir / "train_copy.jsonl");
  ok &= manifest_ok;
  detail += std::string(", manifest ") + (manifest_ok ? "identical" : "differs");

  auto cfg = nst::default_nst_config(corpus);
  cfg.stage0_trainer.steps = cfg.student_trainer.steps = 5;
  cfg.stage0_trainer.warmup_steps = cfg.student_trainer.warmup_steps = 1;
  cfg.max_generations = 2;
  cfg.stop_on_plateau = false;
  std::vector<nst::ProvenanceGraph> graphs;
  for (const char* run : {"run_a", "run_b"}) {
    auto ws = nst::Workspace::open(dir / "corpus");
    nst::run_nst(cfg, ws, dir / run);
    graphs.push_back(nst::replay_ledger(nst::read_ledger(dir / run / "ledger.jsonl")));
  }
  std::string rewritten;
  for (const auto& r : nst::read_ledger(dir / "run_a" / "ledger.jsonl")) rewritten += r.dump() + "\n";
  const bool ledger_ok = graphs[0] == graphs[1] && !graphs[0].empty() && rewritten == read_bytes(dir / "run_a" / "ledger.jsonl");
  ok &= ledger_ok;
  detail += ", ledger replays to " + std::to_string(graphs[0].size()) + "-node graph " + (ledger_ok ? "identically" : "inconsistently");
  return {ok, detail};
}

struct ExperimentCriterion {
  std::string preset;
  std::vector<std::string> assertions;  // empty: all of the preset's assertions
};

Outcome from_report(const eval::ExperimentReport& r, const std::vector<std::string>& names) {
  bool ok = true;
  std::string detail;
  for (const auto& a : r.assertions) {
    if (!names.empty() && std::find(names.begin(), names.end(), a.name) == names.end()) continue;
    ok &= a.passed;
    detail += a.name + (a.passed ? " ok" : " FAILED") + " [" + a.detail + "]; ";
  }
  for (const auto& run : r.runs)
    for (const auto& row : run.rows)
      if (row.error) detail += "seed " + std::to_string(run.seed) + " row " + row.label + " error: " + *row.error + "; ";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  bool resume = false;
  std::size_t threads = 0, seeds = 3;
  app.add_option("--work-dir", work, "Scratch directory (wiped unless --resume)");
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_flag("--resume", resume, "Reuse checkpoints cached by an earlier run");
  app.add_option("--threads", threads, "Worker threads");
  app.add_option("--seeds", seeds, "Seeds per experiment");
  CLI11_PARSE(app, argc, argv);

  const fs::path work_dir(work);
  if (!resume) fs::remove_all(work_dir);
  fs::create_directories(work_dir);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.contains(id); };

  eval::ExperimentOptions options;
  options.out_dir = work_dir / "experiments";
  options.num_seeds = seeds;
  options.threads = threads;

  std::map<std::string, eval::ExperimentReport> reports;
  auto experiment = [&](const std::string& preset) -> const eval::ExperimentReport& {
    if (!reports.contains(preset)) {
      auto r = eval::run_experiment(preset, options);
      eval::write_report(r, options.out_dir / preset);
      reports.emplace(preset, std::move(r));
    }
    return reports.at(preset);
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"RNN-T loss matches alignment enumeration", rnnt_oracle},
      {"gradient check on the desk-scale teacher (RNN-T and HAT joints)", gradient_integrity},
      {"streaming causality of the causal encoder and cascaded second pass", streaming_causality},
      {"hydra gradient routing", hydra_routing},
      {"generation pattern: supervised >= JUST >= gen1 >= gen2, gain >= 1, plateau, <= 30 CPU minutes",
       [&] {
         const auto& r = experiment("table2_nst_generations");
         auto o = from_report(r, {});
         const bool fast = r.cpu_seconds <= 1800.0;
         o.passed &= fast;
         o.detail += "cpu " + fmt(r.cpu_seconds, 4) + " s" + (fast ? "" : " (over budget)");
         return o;
       }},
      {"pseudo-label student beats corrupted-human-label student", [&] { return from_report(experiment("human_vs_pseudo"), {}); }},
      {"student inits converge within 0.5", [&] { return from_report(experiment("table5_student_init"), {}); }},
      {"mixing sweep best is intermediate or zero-hours; all-human never strictly best",
       [&] { return from_report(experiment("table4_mixing"), {}); }},
      {"confidence filter helps a weak teacher only", [&] { return from_report(experiment("tableA3_conf_sweep"), {}); }},
      {"WER dynamic program matches exhaustive recursion", wer_oracle},
      {"serialization round-trips and ledger replay", [&] { return serialization(work_dir); }},
  };

  json summary = json::array();
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all &= o.passed;
    std::printf("criterion %2d %s  %s: %s (%.1f s)\n", id, o.passed ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    summary.push_back({{"criterion", id}, {"name", criteria[i].first}, {"passed", o.passed}, {"detail", o.detail}});
  }
  std::ofstream(work_dir / "acceptance.json") << summary.dump(2) << "\n";
  return all ? 0 : 1;
}
