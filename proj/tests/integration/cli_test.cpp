#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("nstlab_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    json domain{{"tokens_min", 2}, {"tokens_max", 4}, {"frames_min", 2}, {"frames_max", 3}, {"sigma", 1.0},
                {"prototype_base", 0}, {"prototype_shift", 0.0}, {"silence_frames", 1}};
    auto make = [&](const char* name, int train, int eval, const char* labels, double shift) {
      json d = domain;
      d["name"] = name;
      d["train_count"] = train;
      d["eval_count"] = eval;
      d["train_labels"] = labels;
      d["prototype_shift"] = shift;
      return d;
    };
    json tiny{{"corpus",
               {{"domains", {make("vs", 16, 10, "human", 0.0), make("mf", 8, 6, "human", 0.6),
                             make("vs_unsup", 16, 0, "none", 0.0), make("vs_new", 8, 6, "none", 0.5)}}}},
              {"nst",
               {{"max_generations", 2},
                {"stage0_trainer", {{"steps", 8}, {"warmup_steps", 2}}},
                {"student_trainer", {{"steps", 8}, {"warmup_steps", 2}}}}}};
    std::ofstream(root_ / "tiny.json") << tiny.dump(2);
    json untrained = tiny;
    untrained["nst"]["initial_mode"] = "supervised";
    untrained["nst"]["stage0_trainer"]["steps"] = 0;
    std::ofstream(root_ / "untrained.json") << untrained.dump(2);
    std::ofstream(root_ / "broken.json") << "{\"nst\": {";
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static Outcome run(const std::string& args) {
    const auto out = root_ / "stdout.txt", err = root_ / "stderr.txt";
    const std::string cmd = std::string(NSTLAB_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  static std::string path(const std::string& rel) { return (root_ / rel).string(); }

  static void expect_error(const Outcome& o, int code, const std::string& kind) {
    EXPECT_EQ(o.code, code) << o.err;
    auto j = json::parse(o.err);
    EXPECT_EQ(j["error"]["code"], code);
    EXPECT_EQ(j["error"]["kind"], kind);
  }

  static inline fs::path root_;
};

TEST_F(Cli, DistinctExitCodes) {
  expect_error(run(""), 2, "usage");
  expect_error(run("evaluate --bogus-flag"), 2, "usage");
  expect_error(run("experiment --preset no_such_table --out-dir " + path("x")), 3, "unknown_preset");
  expect_error(run("gen-data --config " + path("broken.json") + " --out-dir " + path("x")), 4, "malformed_config");
  expect_error(run("nst-run --corpus " + path("nowhere") + " --out-dir " + path("x")), 5, "missing_input");
  expect_error(run("gen-data --config " + path("absent.json") + " --out-dir " + path("x")), 5, "missing_input");
}

TEST_F(Cli, EndToEndCommands) {
  auto gen = run("gen-data --seed 3 --config " + path("tiny.json") + " --out-dir " + path("corpus"));
  ASSERT_EQ(gen.code, 0) << gen.err;
  EXPECT_TRUE(fs::exists(path("corpus/corpus.json")));
  EXPECT_EQ(json::parse(gen.out)["train_utterances"], 48);

  // An untrained model decodes at or above chance: with 16 ground-truth
  // tokens, even a length-matched uniform guesser is right 1 time in 16.
  auto untrained = run("train --seed 3 --config " + path("untrained.json") + " --corpus " + path("corpus") +
                       " --out-dir " + path("random"));
  ASSERT_EQ(untrained.code, 0) << untrained.err;
  auto eval = run("evaluate --corpus " + path("corpus") + " --checkpoint " + path("random/checkpoint.nstc") +
                  " --out-dir " + path("random"));
  ASSERT_EQ(eval.code, 0) << eval.err;
  auto report = json::parse(eval.out);
  EXPECT_GE(report["overall_wer"].get<double>(), 100.0 * (1.0 - 1.0 / 16.0) - 5.0);
  EXPECT_TRUE(fs::exists(path("random/eval.json")));

  auto trained = run("train --seed 3 --config " + path("tiny.json") + " --corpus " + path("corpus") + " --out-dir " +
                     path("teacher"));
  ASSERT_EQ(trained.code, 0) << trained.err;
  auto labeled = run("pseudo-label --corpus " + path("corpus") + " --checkpoint " + path("teacher/checkpoint.nstc") +
                     " --out-dir " + path("labels"));
  ASSERT_EQ(labeled.code, 0) << labeled.err;
  EXPECT_EQ(json::parse(labeled.out)["records"], 48);
  auto filtered = run("filter --manifest " + path("labels/pseudo.jsonl") + " --threshold 0 --out-dir " + path("labels"));
  ASSERT_EQ(filtered.code, 0) << filtered.err;
  EXPECT_EQ(json::parse(filtered.out)["kept"], 48);
  auto mixed = run("mix --human " + path("corpus/train.jsonl") + " --pseudo " + path("labels/pseudo.jsonl") +
                   " --human-hours 0 --out-dir " + path("labels"));
  // The training manifest includes unlabeled utterances, so it cannot serve
  // as the human side of a mix.
  EXPECT_EQ(mixed.code, 1);

  auto nst = run("nst-run --seed 3 --config " + path("tiny.json") + " --corpus " + path("corpus") + " --out-dir " +
                 path("nst"));
  ASSERT_EQ(nst.code, 0) << nst.err;
  EXPECT_TRUE(fs::exists(path("nst/ledger.jsonl")));
  EXPECT_TRUE(fs::exists(path("nst/gen1/checkpoint.nstc")));
}

TEST_F(Cli, ExperimentReportAndRerender) {
  auto exp = run("experiment --preset table2_nst_generations --seed 7 --seeds 1 --config " + path("tiny.json") +
                 " --out-dir " + path("exp"));
  ASSERT_EQ(exp.code, 0) << exp.err;
  auto report = json::parse(slurp(path("exp/table2_nst_generations/report.json")));
  EXPECT_EQ(report["preset"], "table2_nst_generations");
  EXPECT_EQ(report["config"]["seeds"], json::array({7}));
  EXPECT_FALSE(report["config_hash"].get<std::string>().empty());
  EXPECT_FALSE(report["runs"][0]["corpus_hash"].get<std::string>().empty());
  std::set<std::string> labels;
  for (const auto& row : report["median"]) labels.insert(row["label"].get<std::string>());
  for (const char* l : {"supervised", "just_hydra", "nst_gen1", "nst_gen2"}) EXPECT_TRUE(labels.contains(l)) << l;
  for (const char* f : {"report.txt", "plot.tsv", "plot.svg"})
    EXPECT_TRUE(fs::exists(path(std::string("exp/table2_nst_generations/") + f))) << f;

  auto again = run("report --input " + path("exp/table2_nst_generations/report.json") + " --out-dir " + path("rerender"));
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(path("rerender/report.txt")), slurp(path("exp/table2_nst_generations/report.txt")));
  EXPECT_EQ(slurp(path("rerender/plot.tsv")), slurp(path("exp/table2_nst_generations/plot.tsv")));
}

}  // namespace
