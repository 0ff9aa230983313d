#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "nstlab/core/params.hpp"
#include "nstlab/loss/just.hpp"
#include "nstlab/model/spec.hpp"
#include "nstlab/nst/dataset.hpp"
#include "nstlab/synth/features.hpp"

namespace nstlab::nst {

struct TrainerConfig {
  std::size_t steps = 400;
  std::size_t batch_size = 8;
  // With self-supervised terms active and a nonzero value, each step takes
  // batch_size labeled utterances plus this many unlabeled ones; otherwise
  // batches are drawn from one shuffled pool.
  std::size_t unlabeled_batch_size = 0;
  double learning_rate = 2e-3;
  std::size_t warmup_steps = 40;
  // The learning rate decays linearly to this fraction of its peak.
  double final_lr_fraction = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  loss::JustWeights weights{1.0, 0.0, 0.0};
  loss::SslConfig ssl;
  // Input noise applied to raw frames before stacking.
  synth::MaskPolicy noise;
  // Additive Gaussian noise at this SNR on raw frames; 0 or below disables.
  double noise_snr_db = 0.0;
  double dropout = 0.0;
  double codebook_decay = 0.95;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::ordered_json& j, const TrainerConfig& c);
void from_json(const nlohmann::ordered_json& j, TrainerConfig& c);

// Non-finite loss or gradient during training.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainStats {
  std::vector<double> loss;
  double final_loss = 0.0;
};

// Adam with warmup, linear decay and global-norm clipping. Batches are drawn
// by reshuffling each pool once it is exhausted. Utterances without tokens contribute
// only to the self-supervised terms. Updates `params` in place.
TrainStats train(const model::ModelSpec& spec, core::ParameterSet<float>& params, const Dataset& data,
                 const TrainerConfig& config);

}  // namespace nstlab::nst
