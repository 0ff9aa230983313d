#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nstlab/synth/corpus.hpp"
#include "nstlab/synth/features.hpp"

namespace nstlab::synth {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("nstlab_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorpusSpec tiny_spec(std::size_t count) {
  CorpusSpec s = default_corpus_spec();
  s.domains.resize(1);
  s.domains[0].train_count = count;
  s.domains[0].eval_count = 0;
  return s;
}

TEST(Corpus, RecordsMatchFeatureFiles) {
  auto dir = scratch_dir("records");
  auto corpus = generate_corpus(tiny_spec(10), dir);
  ASSERT_EQ(corpus.train.records.size(), 10u);
  for (const auto& r : corpus.train.records) {
    auto path = corpus.train.feature_path(r);
    ASSERT_TRUE(fs::exists(path));
    EXPECT_EQ(fs::file_size(path), 24 + r.num_frames * 16 * sizeof(float));
    EXPECT_EQ(read_features(path).dim(0), r.num_frames);
    ASSERT_TRUE(r.tokens.has_value());
  }
  EXPECT_EQ(read_manifest(dir / "train.jsonl"), corpus.train);
}

TEST(Corpus, GenerationIsByteDeterministic) {
  auto dir = scratch_dir("determinism");
  auto spec = default_corpus_spec();
  for (auto& d : spec.domains) {
    d.train_count = std::min<std::size_t>(d.train_count, 6);
    d.eval_count = std::min<std::size_t>(d.eval_count, 3);
  }
  generate_corpus(spec, dir);
  std::map<std::string, std::string> first;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) first[e.path().string()] = slurp(e.path());
  generate_corpus(spec, dir);
  std::size_t compared = 0;
  for (const auto& [path, bytes] : first) {
    EXPECT_EQ(slurp(path), bytes) << path;
    ++compared;
  }
  EXPECT_GT(compared, 30u);
}

TEST(Corpus, NearestPrototypeRecoversFramesAtLowNoise) {
  auto dir = scratch_dir("bayes");
  auto spec = tiny_spec(40);
  spec.domains[0].sigma = 0.1;
  spec.domains[0].silence_frames = 0;
  auto corpus = generate_corpus(spec, dir);
  auto protos = make_prototypes(spec)[0];
  std::size_t correct = 0, total = 0;
  for (const auto& r : corpus.train.records) {
    auto frames = read_features(corpus.train.feature_path(r));
    // Reconstruct the frame-level truth: consecutive runs of equal nearest
    // prototypes must reproduce the oracle token sequence.
    std::vector<int> nearest;
    for (std::size_t t = 0; t < frames.dim(0); ++t) {
      int best = 1;
      double best_d = 1e300;
      for (int v = 1; v <= spec.base_vocab(); ++v) {
        double d = 0;
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
          double diff = frames.at(t, j) - protos.at(static_cast<std::size_t>(v), j);
          d += diff * diff;
        }
        if (d < best_d) best_d = d, best = v;
      }
      nearest.push_back(best);
    }
    std::vector<int> collapsed;
    for (int v : nearest)
      if (collapsed.empty() || collapsed.back() != v) collapsed.push_back(v);
    total += frames.dim(0);
    if (collapsed == r.oracle_tokens) correct += frames.dim(0);
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(total), 0.99);
}

TEST(Corpus, GroundTruthHasNoVariantsOrRepeats) {
  auto dir = scratch_dir("truth");
  auto spec = tiny_spec(50);
  auto corpus = generate_corpus(spec, dir);
  for (const auto& r : corpus.train.records) {
    for (std::size_t i = 0; i < r.oracle_tokens.size(); ++i) {
      EXPECT_LE(r.oracle_tokens[i], spec.base_vocab());
      if (i > 0) {
        EXPECT_NE(r.oracle_tokens[i], r.oracle_tokens[i - 1]);
      }
    }
  }
}

TEST(Corpus, InvalidSpecRejected) {
  auto spec = default_corpus_spec();
  spec.domains[0].frames_min = 0;
  EXPECT_THROW(spec.validate(), core::ContractViolation);
  spec = default_corpus_spec();
  spec.vocab_size = 1;
  EXPECT_THROW(spec.validate(), core::ContractViolation);
}

TEST(Corpus, UnwritableDirectoryFails) {
  EXPECT_THROW(generate_corpus(tiny_spec(1), "/proc/nstlab_cannot_write"), std::runtime_error);
}

TEST(StackAndTag, PaperGeometry) {
  Frames f({8, 128}, 0.5f);
  auto out = stack_and_tag(f, 4, 3, 2, 16);
  EXPECT_EQ(out.dim(1), 528u);
}

TEST(StackAndTag, SingleFramePadsByRepetition) {
  Frames f({1, 3}, std::vector<float>{1, 2, 3});
  auto out = stack_and_tag(f, 2, 2, 1, 2);
  ASSERT_EQ(out.dim(0), 1u);
  EXPECT_EQ(out.data, (std::vector<float>{1, 2, 3, 1, 2, 3, 0, 1}));
}

TEST(StackAndTag, OutputLengthIsCeilOfSubsampling) {
  Frames f({10, 2}, 1.0f);
  EXPECT_EQ(stack_and_tag(f, 4, 3, 0, 1).dim(0), 4u);
  EXPECT_THROW(stack_and_tag(Frames({0, 2}), 1, 1, 0, 1), core::ContractViolation);
}

double power(const Frames& f) {
  double p = 0;
  for (float v : f.data) p += static_cast<double>(v) * v;
  return p;
}

TEST(AugmentNoise, InfiniteSnrIsIdentity) {
  core::Prng rng(1, 1), init(2, 2);
  Frames f({5, 4});
  for (auto& v : f.data) v = static_cast<float>(init.normal());
  EXPECT_EQ(augment_noise(f, std::numeric_limits<double>::infinity(), rng), f);
}

TEST(AugmentNoise, HitsTargetSnr) {
  core::Prng init(3, 3);
  for (double snr : {0.0, 12.0, 30.0}) {
    Frames f({40, 16});
    for (auto& v : f.data) v = static_cast<float>(init.normal() * 2.0);
    core::Prng rng(5, 7);
    auto out = augment_noise(f, snr, rng);
    Frames noise = out;
    for (std::size_t i = 0; i < noise.size(); ++i) noise.data[i] = out.data[i] - f.data[i];
    EXPECT_NEAR(10.0 * std::log10(power(f) / power(noise)), snr, 0.1);
  }
}

TEST(AugmentNoise, SeededAndZeroPowerSafe) {
  Frames f({6, 3}, 1.0f);
  core::Prng a(8, 8), b(8, 8);
  EXPECT_EQ(augment_noise(f, 12.0, a), augment_noise(f, 12.0, b));
  Frames zero({6, 3});
  core::Prng c(1, 1);
  EXPECT_EQ(augment_noise(zero, 12.0, c), zero);
}

TEST(MaskAugment, ZeroCountsIsIdentity) {
  Frames f({7, 5}, 2.0f);
  core::Prng rng(1, 1);
  EXPECT_EQ(mask_augment(f, MaskPolicy{}, rng), f);
}

TEST(MaskAugment, FullWidthTimeMaskZeroesEverything) {
  Frames f({7, 5}, 2.0f);
  core::Prng rng(1, 1);
  MaskPolicy p{.time_mask_count = 1, .time_mask_min = 7, .time_mask_max = 7};
  for (float v : mask_augment(f, p, rng).data) EXPECT_EQ(v, 0.0f);
}

// Probability that a given index is covered by one mask whose width is uniform
// in [lo, hi] and whose start is uniform among valid offsets.
double cover_probability(std::size_t index, std::size_t n, std::size_t lo, std::size_t hi) {
  double p = 0;
  for (std::size_t w = lo; w <= hi; ++w) {
    std::size_t starts = n - w + 1, covering = 0;
    for (std::size_t s = 0; s < starts; ++s) covering += (index >= s && index < s + w);
    p += static_cast<double>(covering) / static_cast<double>(starts) / static_cast<double>(hi - lo + 1);
  }
  return p;
}

TEST(MaskAugment, MaskedFractionMatchesSamplingLaw) {
  const std::size_t n = 20, f = 8;
  MaskPolicy p{.time_mask_count = 2, .time_mask_max = 5, .feat_mask_count = 1, .feat_mask_max = 3};
  double expected = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < f; ++j) {
      double row = 1 - std::pow(1 - cover_probability(t, n, 0, 5), 2);
      double col = cover_probability(j, f, 0, 3);
      expected += 1 - (1 - row) * (1 - col);
    }
  }
  expected /= static_cast<double>(n * f);
  Frames ones({n, f}, 1.0f);
  core::Prng rng(11, 4);
  double masked = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    auto out = mask_augment(ones, p, rng);
    for (float v : out.data) masked += (v == 0.0f);
  }
  masked /= 1000.0 * static_cast<double>(n * f);
  EXPECT_NEAR(masked, expected, 0.1 * expected);
}

TEST(MaskAugment, OnlyMaskedCellsChange) {
  core::Prng init(4, 4), rng(5, 5);
  Frames f({12, 6});
  for (auto& v : f.data) v = static_cast<float>(init.uniform(1.0, 2.0));
  auto out = mask_augment(f, {.time_mask_count = 2, .time_mask_max = 4, .feat_mask_count = 2, .feat_mask_max = 2}, rng);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_TRUE(out.data[i] == 0.0f || out.data[i] == f.data[i]);
}

TEST(CorruptLabels, RateEndpoints) {
  std::map<int, int> vm{{1, 9}, {2, 10}};
  Tokens t{1, 3, 2, 1, 4};
  core::Prng rng(1, 1);
  EXPECT_EQ(corrupt_labels(t, vm, 0.0, 10, rng), t);
  EXPECT_EQ(corrupt_labels(t, vm, 1.0, 10, rng), (Tokens{9, 3, 10, 9, 4}));
  EXPECT_THROW(corrupt_labels(t, {{1, 11}}, 0.5, 10, rng), core::ContractViolation);
}

TEST(CorruptLabels, ReplacementRateConcentrates) {
  std::map<int, int> vm{{1, 5}};
  Tokens t(10000, 1);
  core::Prng rng(6, 6);
  auto out = corrupt_labels(t, vm, 0.3, 5, rng);
  double replaced = static_cast<double>(std::count(out.begin(), out.end(), 5)) / 10000.0;
  EXPECT_GE(replaced, 0.27);
  EXPECT_LE(replaced, 0.33);
}

TEST(CorruptLabels, PreservesLengthAndUnmappedTokens) {
  std::map<int, int> vm{{1, 7}, {2, 8}};
  core::Prng rng(9, 9), gen(10, 10);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens t(static_cast<std::size_t>(gen.range(0, 12)));
    for (auto& x : t) x = gen.range(1, 6);
    auto out = corrupt_labels(t, vm, 0.5, 8, rng);
    ASSERT_EQ(out.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!vm.count(t[i])) {
        EXPECT_EQ(out[i], t[i]);
      }
    }
  }
}

TEST(Manifest, RoundTripAndInvariants) {
  Manifest m;
  m.header.corpus_hash = "abc";
  m.header.feature_root = "/tmp/x";
  m.header.provenance = {{"teacher", "deadbeef"}};
  m.records.push_back({"u1", "features/u1.nstf", 12, 0, Tokens{1, 2}, LabelSource::kHuman, std::nullopt, {1, 2}});
  m.records.push_back({"u2", "features/u2.nstf", 30, 1, Tokens{3}, LabelSource::kPseudo, 0.25, {3, 4}});
  m.records.push_back({"u3", "features/u3.nstf", 8, 2, std::nullopt, LabelSource::kNone, std::nullopt, {5}});
  auto text = serialize_manifest(m);
  auto back = parse_manifest(text);
  EXPECT_EQ(back, m);
  EXPECT_EQ(serialize_manifest(back), text);
  EXPECT_NEAR(m.hours(), 50 * 10.0 / 3.6e6, 1e-15);
  auto bad = m;
  bad.records[0].confidence = 0.5;
  EXPECT_THROW(bad.validate(), core::ContractViolation);
  bad = m;
  bad.records[1].utt_id = "u1";
  EXPECT_THROW(bad.validate(), core::ContractViolation);
  EXPECT_THROW(parse_manifest("{\"format\":\"other\"}\n"), core::ContractViolation);
}

TEST(Features, RoundTripIsBitExact) {
  auto dir = scratch_dir("features");
  fs::create_directories(dir);
  core::Prng rng(12, 12);
  Frames f({9, 5});
  for (auto& v : f.data) v = static_cast<float>(rng.normal());
  write_features(f, dir / "x.nstf");
  EXPECT_EQ(read_features(dir / "x.nstf"), f);
}

}  // namespace
}  // namespace nstlab::synth
