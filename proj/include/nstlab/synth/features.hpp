#pragma once

#include <filesystem>

#include "nstlab/core/prng.hpp"
#include "nstlab/core/tensor.hpp"

namespace nstlab::synth {

using Frames = core::Tensor<float>;

// Binary feature file: "NSTF", u32 version, u64 num_frames, u64 dim, then
// row-major little-endian float32 frames.
void write_features(const Frames& frames, const std::filesystem::path& path);
Frames read_features(const std::filesystem::path& path);

// Stacks k contiguous frames (edge-padded by repeating the last frame), keeps
// every s-th stacked frame and appends a one-hot domain tag.
// Output shape [ceil(N/s), k*F + num_domains].
Frames stack_and_tag(const Frames& frames, std::size_t stack, std::size_t subsample, std::size_t domain,
                     std::size_t num_domains);

// Adds Gaussian noise rescaled so the signal-to-noise ratio is exactly snr_db.
// Infinite SNR and zero-power input return the input unchanged.
Frames augment_noise(const Frames& frames, double snr_db, core::Prng& rng);

struct MaskPolicy {
  std::size_t time_mask_count = 0;
  std::size_t time_mask_min = 0;
  std::size_t time_mask_max = 0;
  std::size_t feat_mask_count = 0;
  std::size_t feat_mask_min = 0;
  std::size_t feat_mask_max = 0;

  bool empty() const { return time_mask_count == 0 && feat_mask_count == 0; }
};

// Zeroes random time spans and feature bands. Each mask draws a width
// uniformly in [min, max] and then a start uniformly among valid positions.
Frames mask_augment(const Frames& frames, const MaskPolicy& policy, core::Prng& rng);

}  // namespace nstlab::synth
