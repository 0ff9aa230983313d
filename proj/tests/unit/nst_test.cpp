#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nstlab/eval/wer.hpp"
#include "nstlab/model/network.hpp"
#include "nstlab/nst/labels.hpp"
#include "nstlab/nst/pipeline.hpp"
#include "nstlab/nst/trainer.hpp"

namespace nstlab::nst {
namespace {

namespace fs = std::filesystem;
using synth::LabelSource;

synth::CorpusSpec tiny_corpus() {
  synth::CorpusSpec s;
  s.vocab_size = 6;
  s.num_variants = 2;
  s.inconsistency_rate = 0.2;
  s.feature_dim = 4;
  s.seed = 5;
  synth::DomainSpec vs{.name = "vs", .train_count = 12, .eval_count = 6, .tokens_min = 1, .tokens_max = 3,
                       .frames_min = 2, .frames_max = 3, .sigma = 0.3, .train_labels = LabelSource::kHuman,
                       .prototype_base = 0, .prototype_shift = 0.0, .silence_frames = 1};
  synth::DomainSpec un = vs;
  un.name = "un";
  un.eval_count = 0;
  un.train_labels = LabelSource::kNone;
  un.prototype_base = 0;
  s.domains = {vs, un};
  return s;
}

model::ModelSpec tiny_model(const synth::CorpusSpec& c, bool ssl) {
  model::ModelSpec m;
  m.input_dim = c.input_dim();
  m.domain_dims = c.num_domains();
  m.encoder = {.num_blocks = 2, .model_dim = 8, .conv_kernel = 3, .attn_heads = 2, .ffn_mult = 2,
               .attn_left_ctx = 2, .attn_right_ctx = 2, .causal = false};
  m.hydra = ssl ? model::HydraSpec{1, 1, 1} : model::HydraSpec{2, 0, 0};
  m.label_encoder = {1, 8, 8};
  m.joint = {8, static_cast<std::size_t>(c.vocab_size), model::JointKind::kRnnt};
  m.ssl = {ssl, 8, 4};
  return m;
}

class NstFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("nstlab_nst_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    synth::generate_corpus(tiny_corpus(), root_ / "corpus");
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static NstConfig tiny_config() {
    auto c = tiny_corpus();
    NstConfig cfg;
    cfg.experiment_id = "tiny";
    cfg.teacher_spec = tiny_model(c, true);
    cfg.student_spec = cfg.teacher_spec;
    cfg.stage0_trainer.steps = 6;
    cfg.stage0_trainer.batch_size = 4;
    cfg.stage0_trainer.warmup_steps = 2;
    cfg.stage0_trainer.weights = {1.0, 1.0, 1.0};
    cfg.stage0_trainer.ssl.distractors = 2;
    cfg.stage0_trainer.ssl.mask_prob = 0.3;
    cfg.student_trainer = cfg.stage0_trainer;
    cfg.student_trainer.weights = {1.0, 0.0, 0.0};
    cfg.student_trainer.noise = {.time_mask_count = 1, .time_mask_min = 1, .time_mask_max = 2,
                                 .feat_mask_count = 1, .feat_mask_min = 1, .feat_mask_max = 2};
    cfg.max_generations = 2;
    cfg.stop_on_plateau = false;
    cfg.threads = 1;
    return cfg;
  }

  static inline fs::path root_;
};

synth::Manifest human_subset(const Workspace& ws) { return ws.train_subset({"vs"}, true); }

TEST_F(NstFixture, PseudoLabelMarksEveryRecord) {
  auto ws = Workspace::open(root_ / "corpus");
  model::Checkpoint teacher{tiny_model(ws.corpus, false), model::init_params(tiny_model(ws.corpus, false), 3), 0, {}};
  synth::Manifest five = ws.train;
  five.records.resize(5);
  auto a = pseudo_label(teacher, five, ws.features, ws.front_end, {}, 1);
  auto b = pseudo_label(teacher, five, ws.features, ws.front_end, {}, 2);
  ASSERT_EQ(a.manifest.records.size(), 5u);
  EXPECT_TRUE(a.failed.empty());
  EXPECT_EQ(a.manifest.header.provenance.at("teacher"), teacher.id());
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& r = a.manifest.records[i];
    EXPECT_EQ(r.label_source, LabelSource::kPseudo);
    ASSERT_TRUE(r.confidence.has_value());
    EXPECT_GE(*r.confidence, 0.0);
    EXPECT_LE(*r.confidence, 1.0);
    EXPECT_EQ(r.oracle_tokens, five.records[i].oracle_tokens);
  }
  EXPECT_NO_THROW(a.manifest.validate());
  EXPECT_EQ(synth::serialize_manifest(a.manifest), synth::serialize_manifest(b.manifest));
}

TEST_F(NstFixture, MixLabelsAccounting) {
  auto ws = Workspace::open(root_ / "corpus");
  model::Checkpoint teacher{tiny_model(ws.corpus, false), model::init_params(tiny_model(ws.corpus, false), 4), 0, {}};
  auto human = human_subset(ws);
  auto pseudo = pseudo_label(teacher, human, ws.features, ws.front_end, {}, 1).manifest;

  core::Prng r0(1, 1);
  auto none = mix_labels(human, pseudo, 0.0, r0);
  EXPECT_EQ(none.manifest.records, pseudo.records);
  EXPECT_EQ(none.human_utterances, 0u);

  core::Prng r1(1, 1);
  auto all = mix_labels(human, pseudo, human.hours(), r1);
  EXPECT_EQ(all.manifest.records, human.records);

  double longest = 0;
  for (const auto& r : human.records) longest = std::max(longest, human.hours_of(r));
  for (double frac : {0.1, 0.35, 0.5, 0.8}) {
    const double target = frac * human.hours();
    core::Prng a(7, 1), b(7, 1);
    auto x = mix_labels(human, pseudo, target, a);
    auto y = mix_labels(human, pseudo, target, b);
    EXPECT_EQ(x.manifest.records, y.manifest.records);
    EXPECT_LE(std::abs(x.human_hours - target), longest);
    double counted_human = 0;
    for (const auto& r : x.manifest.records)
      if (r.label_source == LabelSource::kHuman) counted_human += x.manifest.hours_of(r);
    EXPECT_NEAR(counted_human, x.human_hours, 1e-12);
    EXPECT_NEAR(x.human_hours + x.pseudo_hours, human.hours(), 1e-9);
  }

  core::Prng r2(1, 1);
  EXPECT_THROW(mix_labels(human, pseudo, human.hours() * 1.5, r2), core::ContractViolation);
  auto shorter = pseudo;
  shorter.records.pop_back();
  EXPECT_THROW(mix_labels(human, shorter, 0.0, r2), core::ContractViolation);
}

TEST_F(NstFixture, TrainerReducesLossAndReportsDivergence) {
  auto ws = Workspace::open(root_ / "corpus");
  auto spec = tiny_model(ws.corpus, false);
  auto params = model::init_params(spec, 9);
  TrainerConfig tc;
  tc.steps = 60;
  tc.batch_size = 4;
  tc.warmup_steps = 5;
  tc.learning_rate = 5e-3;
  auto data = make_dataset(human_subset(ws), ws.features, ws.front_end);
  auto stats = train(spec, params, data, tc);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) first += stats.loss[i], last += stats.loss[stats.loss.size() - 1 - i];
  EXPECT_LT(last, first);

  auto broken = data;
  broken.items[0].frames.data[0] = std::numeric_limits<float>::infinity();
  auto p2 = model::init_params(spec, 9);
  tc.batch_size = static_cast<std::size_t>(broken.items.size());
  EXPECT_THROW(train(spec, p2, broken, tc), TrainingDiverged);
}

TEST(TrainerConfig, JsonRoundTrip) {
  TrainerConfig c;
  c.steps = 17;
  c.weights = {0.5, 0.25, 2.0};
  c.ssl.distractors = 3;
  c.noise.time_mask_count = 2;
  c.noise_snr_db = 12;
  c.dropout = 0.1;
  nlohmann::ordered_json j = c;
  nlohmann::ordered_json back = j.get<TrainerConfig>();
  EXPECT_EQ(back, j);
  EXPECT_EQ(back["steps"], 17);
}

TEST(Convergence, NeverOnStrictImprovement) {
  core::Prng rng(2, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const double eps = rng.uniform(0.0, 1.0);
    double best = 50.0;
    for (int g = 0; g < 10; ++g) {
      const double current = best - eps - rng.uniform(1e-6, 2.0);
      EXPECT_FALSE(plateaued(best, current, eps));
      best = current;
    }
    EXPECT_TRUE(plateaued(best, best - eps / 2, eps));
    EXPECT_TRUE(plateaued(best, best + 1.0, eps));
  }
}

TEST(Ledger, ReplayRejectsBrokenProvenance) {
  using json = nlohmann::ordered_json;
  std::vector<json> ok{{{"kind", "stage0"}, {"checkpoint_id", "a"}, {"init_id", nullptr}},
                       {{"kind", "generation"}, {"generation", 1}, {"checkpoint_id", "b"}, {"teacher_id", "a"}, {"student_init_id", "a"}},
                       {{"kind", "generation"}, {"generation", 2}, {"checkpoint_id", "c"}, {"teacher_id", "b"}, {"student_init_id", "a"}}};
  auto graph = replay_ledger(ok);
  EXPECT_EQ(graph.size(), 3u);
  EXPECT_EQ(*graph.at("c").teacher, "b");

  auto gap = ok;
  gap[2]["generation"] = 3;
  EXPECT_THROW(replay_ledger(gap), core::ContractViolation);
  auto dangling = ok;
  dangling[2]["teacher_id"] = "zzz";
  EXPECT_THROW(replay_ledger(dangling), core::ContractViolation);
  auto cyclic = ok;
  cyclic[0] = {{"kind", "stage0"}, {"checkpoint_id", "a"}, {"init_id", "c"}};
  EXPECT_THROW(replay_ledger(cyclic), core::ContractViolation);
}

TEST_F(NstFixture, RunNstLayoutLedgerAndDeterminism) {
  auto cfg = tiny_config();
  cfg.human_hours = 0.0;
  auto ws = Workspace::open(root_ / "corpus");
  auto a = run_nst(cfg, ws, root_ / "exp_a");
  auto b = run_nst(cfg, ws, root_ / "exp_b");
  ASSERT_EQ(a.generations.size() + 1, a.checkpoints.size());
  for (std::size_t g = 0; g <= a.generations.size(); ++g) {
    const auto dir = root_ / "exp_a" / ("gen" + std::to_string(g));
    EXPECT_TRUE(fs::exists(dir / "checkpoint.nstc"));
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    if (g > 0) {
      EXPECT_TRUE(fs::exists(dir / "pseudo.jsonl"));
      EXPECT_TRUE(fs::exists(dir / "train.jsonl"));
    }
  }
  auto la = read_ledger(root_ / "exp_a" / "ledger.jsonl");
  auto lb = read_ledger(root_ / "exp_b" / "ledger.jsonl");
  EXPECT_EQ(without_timing(la), without_timing(lb));
  auto graph = replay_ledger(la);
  EXPECT_EQ(replay_ledger(lb), graph);
  // Every produced checkpoint is reachable from the ledger and the default
  // policy pins each student's init to the stage-0 model.
  for (const auto& ckpt : a.checkpoints) EXPECT_TRUE(graph.contains(ckpt.id()));
  for (const auto& g : a.generations) EXPECT_EQ(g.student_init_id, a.stage0.checkpoint_id);
  EXPECT_EQ(a.generations.front().teacher_id, a.stage0.checkpoint_id);
  // With no human hours every training label is a pseudo label.
  auto train = synth::read_manifest(root_ / "exp_a" / "gen1" / "train.jsonl");
  for (const auto& r : train.records) EXPECT_EQ(r.label_source, LabelSource::kPseudo);
  EXPECT_EQ(a.generations[0].human_hours, 0.0);
}

TEST_F(NstFixture, StopsAtPlateau) {
  auto cfg = tiny_config();
  cfg.stop_on_plateau = true;
  cfg.convergence_epsilon = 1e6;
  cfg.max_generations = 3;
  auto ws = Workspace::open(root_ / "corpus");
  auto r = run_nst(cfg, ws, root_ / "exp_plateau");
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.generations.size(), 1u);
}

TEST_F(NstFixture, SingleGenerationAndHumanMix) {
  auto cfg = tiny_config();
  cfg.max_generations = 1;
  cfg.initial_mode = InitialMode::kSupervised;
  auto ws = Workspace::open(root_ / "corpus");
  const double available = human_subset(ws).hours();
  cfg.human_hours = available / 2;
  auto r = run_nst(cfg, ws, root_ / "exp_single");
  ASSERT_EQ(r.generations.size(), 1u);
  double longest = 0;
  for (const auto& rec : ws.train.records) longest = std::max(longest, ws.train.hours_of(rec));
  EXPECT_LE(std::abs(r.generations[0].human_hours - cfg.human_hours), longest);
  auto ledger = read_ledger(root_ / "exp_single" / "ledger.jsonl");
  ASSERT_EQ(ledger.size(), 2u);
  EXPECT_EQ(generation_from_ledger(ledger[1]).checkpoint_id, r.generations[0].checkpoint_id);
}

TEST_F(NstFixture, ReinitPolicies) {
  auto ws = Workspace::open(root_ / "corpus");
  auto cfg = tiny_config();
  cfg.reinit = ReinitPolicy::kPreviousGeneration;
  auto prev = run_nst(cfg, ws, root_ / "exp_prev");
  ASSERT_EQ(prev.generations.size(), 2u);
  EXPECT_EQ(prev.generations[1].student_init_id, prev.generations[0].checkpoint_id);

  cfg.reinit = ReinitPolicy::kFreshRandom;
  auto fresh = run_nst(cfg, ws, root_ / "exp_fresh");
  EXPECT_NE(fresh.generations[0].student_init_id, fresh.stage0.checkpoint_id);
  EXPECT_NO_THROW(replay_ledger(read_ledger(root_ / "exp_fresh" / "ledger.jsonl")));

  cfg.reinit = ReinitPolicy::kFixedInitCheckpoint;
  model::Checkpoint other{cfg.student_spec, model::init_params(cfg.student_spec, 99), 0, {"external", {}, {}, {}}};
  auto pinned = run_nst(cfg, ws, root_ / "exp_pinned", other);
  for (const auto& g : pinned.generations) EXPECT_EQ(g.student_init_id, other.id());
  EXPECT_NO_THROW(replay_ledger(read_ledger(root_ / "exp_pinned" / "ledger.jsonl")));
}

TEST(Confidence, RanksEvalUtterancesByAccuracy) {
  auto corpus = tiny_corpus();
  corpus.domains[0].train_count = 80;
  corpus.domains[0].eval_count = 80;
  corpus.domains[0].sigma = 0.6;
  corpus.domains.pop_back();
  const auto dir = fs::temp_directory_path() / ("nstlab_conf_test_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  synth::generate_corpus(corpus, dir);
  auto ws = Workspace::open(dir);
  model::Checkpoint ckpt{tiny_model(corpus, false), {}, 0, {"conf", {}, {}, {}}};
  ckpt.params = model::init_params(ckpt.spec, 3);
  TrainerConfig tc;
  tc.steps = 800;
  tc.batch_size = 8;
  tc.warmup_steps = 10;
  tc.learning_rate = 5e-3;
  train(ckpt.spec, ckpt.params, make_dataset(ws.train, ws.features, ws.front_end), tc);

  auto labeled = pseudo_label(ckpt, ws.eval, ws.features, ws.front_end).manifest.records;
  std::sort(labeled.begin(), labeled.end(), [](const auto& a, const auto& b) { return *a.confidence > *b.confidence; });
  eval::WerResult top, bottom;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    (i < labeled.size() / 2 ? top : bottom) += eval::wer(labeled[i].oracle_tokens, *labeled[i].tokens);
  EXPECT_GT(bottom.errors(), 0u);
  EXPECT_LE(top.wer(), bottom.wer());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace nstlab::nst
