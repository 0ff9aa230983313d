#include "nstlab/nst/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nstlab/core/ops.hpp"
#include "nstlab/loss/ssl.hpp"

namespace nstlab::nst {

using json = nlohmann::ordered_json;

namespace {

json to_json_value(const synth::MaskPolicy& m) {
  return {{"time_mask_count", m.time_mask_count}, {"time_mask_min", m.time_mask_min},
          {"time_mask_max", m.time_mask_max},     {"feat_mask_count", m.feat_mask_count},
          {"feat_mask_min", m.feat_mask_min},     {"feat_mask_max", m.feat_mask_max}};
}

synth::MaskPolicy mask_from_json(const json& j) {
  synth::MaskPolicy m;
  m.time_mask_count = j.value("time_mask_count", m.time_mask_count);
  m.time_mask_min = j.value("time_mask_min", m.time_mask_min);
  m.time_mask_max = j.value("time_mask_max", m.time_mask_max);
  m.feat_mask_count = j.value("feat_mask_count", m.feat_mask_count);
  m.feat_mask_min = j.value("feat_mask_min", m.feat_mask_min);
  m.feat_mask_max = j.value("feat_mask_max", m.feat_mask_max);
  return m;
}

// Endless reshuffled walk over a fixed pool of item indices.
class Sampler {
 public:
  Sampler(std::vector<std::size_t> pool, core::Prng& rng) : pool_(std::move(pool)), rng_(rng) {}
  bool empty() const { return pool_.empty(); }
  std::size_t next() {
    if (cursor_ == order_.size()) {
      order_ = pool_;
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  std::vector<std::size_t> pool_, order_;
  std::size_t cursor_ = 0;
  core::Prng& rng_;
};

double learning_rate(const TrainerConfig& c, std::size_t step) {
  if (step < c.warmup_steps) return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  const double span = static_cast<double>(std::max<std::size_t>(c.steps - c.warmup_steps, 1));
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  return c.learning_rate * (1.0 - (1.0 - c.final_lr_fraction) * progress);
}

}  // namespace

void to_json(json& j, const TrainerConfig& c) {
  j = json{{"steps", c.steps},
           {"batch_size", c.batch_size},
           {"unlabeled_batch_size", c.unlabeled_batch_size},
           {"learning_rate", c.learning_rate},
           {"warmup_steps", c.warmup_steps},
           {"final_lr_fraction", c.final_lr_fraction},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"grad_clip", c.grad_clip},
           {"weights", {{"rnnt", c.weights.rnnt}, {"contrastive", c.weights.contrastive}, {"masked", c.weights.masked}}},
           {"ssl",
            {{"mask_span", c.ssl.mask_span},
             {"mask_prob", c.ssl.mask_prob},
             {"distractors", c.ssl.distractors},
             {"kappa", c.ssl.kappa},
             {"diversity_weight", c.ssl.diversity_weight},
             {"assignment_temperature", c.ssl.assignment_temperature}}},
           {"noise", to_json_value(c.noise)},
           {"noise_snr_db", c.noise_snr_db},
           {"dropout", c.dropout},
           {"codebook_decay", c.codebook_decay},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainerConfig& c) {
  c = TrainerConfig{};
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.unlabeled_batch_size = j.value("unlabeled_batch_size", c.unlabeled_batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.rnnt = w.value("rnnt", c.weights.rnnt);
    c.weights.contrastive = w.value("contrastive", c.weights.contrastive);
    c.weights.masked = w.value("masked", c.weights.masked);
  }
  if (j.contains("ssl")) {
    const auto& s = j.at("ssl");
    c.ssl.mask_span = s.value("mask_span", c.ssl.mask_span);
    c.ssl.mask_prob = s.value("mask_prob", c.ssl.mask_prob);
    c.ssl.distractors = s.value("distractors", c.ssl.distractors);
    c.ssl.kappa = s.value("kappa", c.ssl.kappa);
    c.ssl.diversity_weight = s.value("diversity_weight", c.ssl.diversity_weight);
    c.ssl.assignment_temperature = s.value("assignment_temperature", c.ssl.assignment_temperature);
  }
  if (j.contains("noise")) c.noise = mask_from_json(j.at("noise"));
  c.noise_snr_db = j.value("noise_snr_db", c.noise_snr_db);
  c.dropout = j.value("dropout", c.dropout);
  c.codebook_decay = j.value("codebook_decay", c.codebook_decay);
  c.seed = j.value("seed", c.seed);
}

TrainStats train(const model::ModelSpec& spec, core::ParameterSet<float>& params, const Dataset& data,
                 const TrainerConfig& config) {
  if (data.items.empty()) throw core::ContractViolation("train: empty dataset");
  if (config.batch_size == 0) throw core::ContractViolation("train: batch_size must be positive");
  if (config.weights.rnnt > 0 && !config.weights.ssl_active() && data.labeled() == 0)
    throw core::ContractViolation("train: supervised training needs labeled utterances");

  const bool ssl = config.weights.ssl_active();
  core::Prng order_rng(config.seed, core::stream_of("train/order"));
  // Supervised-only runs skip unlabeled utterances entirely.
  std::vector<std::size_t> labeled, unlabeled, mixed;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    (data.items[i].tokens ? labeled : unlabeled).push_back(i);
    if (ssl || data.items[i].tokens) mixed.push_back(i);
  }
  const bool stratified = ssl && config.unlabeled_batch_size > 0 && !labeled.empty() && !unlabeled.empty();
  Sampler main_sampler(stratified ? labeled : mixed, order_rng);
  Sampler extra_sampler(stratified ? unlabeled : std::vector<std::size_t>{}, order_rng);
  const std::size_t per_step = config.batch_size + (stratified ? config.unlabeled_batch_size : 0);

  core::Prng noise_rng(config.seed, core::stream_of("train/noise"));
  core::Prng loss_rng(config.seed, core::stream_of("train/loss"));

  const auto& entries = params.entries();
  std::vector<std::vector<float>> m1(entries.size()), m2(entries.size());
  for (std::size_t p = 0; p < entries.size(); ++p) {
    m1[p].assign(entries[p].value.size(), 0.0f);
    m2[p].assign(entries[p].value.size(), 0.0f);
  }
  const bool has_codebook = ssl && params.contains("ssl.codebook");
  bool codebook_ready = !has_codebook;

  TrainStats stats;
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<loss::Example<float>> batch;
    batch.reserve(per_step);
    for (std::size_t b = 0; b < per_step; ++b) {
      const auto& item = data.items[b < config.batch_size ? main_sampler.next() : extra_sampler.next()];
      synth::Frames raw = config.noise.empty() ? item.frames : synth::mask_augment(item.frames, config.noise, noise_rng);
      if (config.noise_snr_db > 0) raw = synth::augment_noise(raw, config.noise_snr_db, noise_rng);
      batch.push_back({synth::model_input(raw, item.domain, data.front_end), item.tokens});
    }

    std::vector<core::Tensor<float>> grads;
    double value = 0;
    loss::JustOutput<float> out;
    try {
      core::ParamVars<float> vars(params);
      out = loss::just_loss<float>(spec, vars, batch, config.weights, config.ssl, loss_rng, config.dropout);
      value = static_cast<double>(out.total.item());
      core::backward(out.total);
      grads = vars.gradients();
    } catch (const core::NonFiniteError& e) {
      std::ostringstream os;
      os << "training diverged at step " << step << ": " << e.what();
      throw TrainingDiverged(os.str());
    }
    if (!std::isfinite(value)) throw TrainingDiverged("training diverged at step " + std::to_string(step));

    double norm2 = 0;
    for (const auto& g : grads)
      for (float x : g.data) norm2 += static_cast<double>(x) * x;
    if (!std::isfinite(norm2)) throw TrainingDiverged("non-finite gradient at step " + std::to_string(step));
    const double clip = config.grad_clip > 0 && norm2 > config.grad_clip * config.grad_clip
                            ? config.grad_clip / std::sqrt(norm2)
                            : 1.0;

    const double lr = learning_rate(config, step);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step + 1));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step + 1));
    for (std::size_t p = 0; p < entries.size(); ++p) {
      auto& e = params.entries()[p];
      if (e.frozen) continue;
      auto& w = e.value.data;
      const auto& g = grads[p].data;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * clip;
        m1[p][i] = static_cast<float>(config.beta1 * m1[p][i] + (1 - config.beta1) * gi);
        m2[p][i] = static_cast<float>(config.beta2 * m2[p][i] + (1 - config.beta2) * gi * gi);
        const double mh = m1[p][i] / bc1, vh = m2[p][i] / bc2;
        w[i] = static_cast<float>(w[i] - lr * mh / (std::sqrt(vh) + config.adam_eps));
      }
    }

    if (has_codebook && !out.target_ids.empty()) {
      auto& codebook = params.at("ssl.codebook");
      if (!codebook_ready) {
        // Seed the codebook with targets drawn from the first batch.
        const std::size_t rows = codebook.dim(0), width = codebook.dim(1), n = out.targets.dim(0);
        for (std::size_t k = 0; k < rows; ++k) {
          const std::size_t src = static_cast<std::size_t>(loss_rng.below(n));
          for (std::size_t c = 0; c < width; ++c) codebook.at(k, c) = out.targets.at(src, c);
        }
        codebook_ready = true;
      } else {
        loss::ema_update_codebook(codebook, out.targets, out.target_ids, config.codebook_decay);
      }
    }
    stats.loss.push_back(value);
  }
  stats.final_loss = stats.loss.empty() ? 0.0 : stats.loss.back();
  return stats;
}

}  // namespace nstlab::nst
