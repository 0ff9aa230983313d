#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace nstlab::core {

// PCG-XSH-RR 64/32 generator with an explicit stream id. The output sequence
// depends only on (seed, stream, call sequence); distributions are computed
// here rather than through <random> so results do not vary between standard
// library implementations.
class Prng {
 public:
  Prng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Inclusive integer range [lo, hi].
  int range(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent generator sharing this seed on another stream.
  Prng fork(std::uint64_t stream) const { return Prng(seed_, stream); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit stream id for a string key (e.g. an utterance id).
std::uint64_t stream_of(std::string_view key);

}  // namespace nstlab::core
