#include "nstlab/synth/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>

namespace nstlab::synth {

using core::ContractViolation;

namespace {

constexpr char kMagic[4] = {'N', 'S', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  return v;
}

}  // namespace

void write_features(const Frames& frames, const std::filesystem::path& path) {
  if (frames.rank() != 2) throw ContractViolation("features must be [frames, dim]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, frames.dim(0));
  put<std::uint64_t>(out, frames.dim(1));
  out.write(reinterpret_cast<const char*>(frames.data.data()),
            static_cast<std::streamsize>(frames.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing feature file " + path.string());
}

Frames read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read feature file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ContractViolation("bad feature file magic: " + path.string());
  auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ContractViolation("unsupported feature file version in " + path.string());
  auto n = get<std::uint64_t>(in);
  auto dim = get<std::uint64_t>(in);
  Frames frames({n, dim});
  in.read(reinterpret_cast<char*>(frames.data.data()), static_cast<std::streamsize>(frames.data.size() * sizeof(float)));
  if (!in) throw ContractViolation("truncated feature file " + path.string());
  return frames;
}

Frames stack_and_tag(const Frames& frames, std::size_t stack, std::size_t subsample, std::size_t domain,
                     std::size_t num_domains) {
  if (stack < 1 || subsample < 1) throw ContractViolation("stack and subsample must be >= 1");
  if (frames.rank() != 2 || frames.dim(0) == 0) throw ContractViolation("stack_and_tag: empty input");
  if (domain >= num_domains) throw ContractViolation("domain index outside one-hot width");
  const std::size_t n = frames.dim(0), f = frames.dim(1);
  const std::size_t out_n = (n + subsample - 1) / subsample;
  const std::size_t width = stack * f + num_domains;
  Frames out({out_n, width});
  for (std::size_t i = 0; i < out_n; ++i) {
    float* row = &out.data[i * width];
    for (std::size_t k = 0; k < stack; ++k) {
      std::size_t src = std::min(i * subsample + k, n - 1);
      std::memcpy(row + k * f, &frames.data[src * f], f * sizeof(float));
    }
    row[stack * f + domain] = 1.0f;
  }
  return out;
}

Frames augment_noise(const Frames& frames, double snr_db, core::Prng& rng) {
  core::require_finite(frames, "augment_noise input");
  if (std::isinf(snr_db) && snr_db > 0) return frames;
  double signal = 0.0;
  for (float v : frames.data) signal += static_cast<double>(v) * v;
  if (frames.data.empty() || signal == 0.0) {
    std::cerr << "warning: augment_noise on zero-power input, returning it unchanged\n";
    return frames;
  }
  std::vector<double> noise(frames.size());
  double noise_power = 0.0;
  for (auto& x : noise) {
    x = rng.normal();
    noise_power += x * x;
  }
  // Rescale so the realized noise power hits the target exactly.
  const double target = signal / std::pow(10.0, snr_db / 10.0);
  const double gain = std::sqrt(target / noise_power);
  Frames out = frames;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<float>(out.data[i] + gain * noise[i]);
  return out;
}

Frames mask_augment(const Frames& frames, const MaskPolicy& policy, core::Prng& rng) {
  if (frames.rank() != 2) throw ContractViolation("mask_augment expects [frames, dim]");
  const std::size_t n = frames.dim(0), f = frames.dim(1);
  if (policy.time_mask_max > n || policy.feat_mask_max > f)
    throw ContractViolation("mask extent exceeds feature dimensions");
  if (policy.time_mask_min > policy.time_mask_max || policy.feat_mask_min > policy.feat_mask_max)
    throw ContractViolation("mask minimum width exceeds maximum");
  Frames out = frames;
  for (std::size_t m = 0; m < policy.time_mask_count; ++m) {
    std::size_t width = policy.time_mask_min + rng.below(policy.time_mask_max - policy.time_mask_min + 1);
    std::size_t start = rng.below(n - width + 1);
    std::fill(out.data.begin() + static_cast<std::ptrdiff_t>(start * f),
              out.data.begin() + static_cast<std::ptrdiff_t>((start + width) * f), 0.0f);
  }
  for (std::size_t m = 0; m < policy.feat_mask_count; ++m) {
    std::size_t width = policy.feat_mask_min + rng.below(policy.feat_mask_max - policy.feat_mask_min + 1);
    std::size_t start = rng.below(f - width + 1);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = start; j < start + width; ++j) out.data[t * f + j] = 0.0f;
  }
  return out;
}

}  // namespace nstlab::synth
