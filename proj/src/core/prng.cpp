#include "nstlab/core/prng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nstlab/core/hash.hpp"

namespace nstlab::core {

namespace {
constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
}

Prng::Prng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), inc_((stream << 1u) | 1u) {
  next_u32();
  state_ += seed;
  next_u32();
}

std::uint32_t Prng::next_u32() {
  std::uint64_t old = state_;
  state_ = old * kMultiplier + inc_;
  auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

std::uint64_t Prng::next_u64() {
  std::uint64_t hi = next_u32();
  return (hi << 32u) | next_u32();
}

double Prng::uniform() { return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53; }

std::uint64_t Prng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Prng::below: n must be positive");
  // Rejection sampling keeps the draw unbiased.
  std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

int Prng::range(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("Prng::range: hi < lo");
  return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double Prng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t stream_of(std::string_view key) { return hash64(key); }

}  // namespace nstlab::core
