// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file rng.hpp
 * @brief Deterministic random number generation for Monte-Carlo trials.
 *
 * The generator stack is fixed (splitmix64 for seeding/derivation,
 * xoshiro256++ for the stream, explicit Box-Muller for normals) so that a
 * (seed, point, trial) triple reproduces the same draws on every platform,
 * independent of standard-library distribution internals.
 */

#include <array>
#include <cmath>
#include <cstdint>

#include "anchorsense/common.hpp"

namespace asense {

/// One splitmix64 step; also used to derive child seeds from a parent seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a2ca9da867b3ULL;
  return z ^ (z >> 31);
}

/// Derives a stream seed from a base seed and an index path (e.g. grid point,
/// trial). Appending indices never reshuffles seeds of earlier indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = base;
  std::uint64_t h = splitmix64(s);
  s = h ^ (a * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL);
  h = splitmix64(s);
  s = h ^ (b * 0xd1b54a32d192ed03ULL + 0x452821e638d01377ULL);
  return splitmix64(s);
}

/// xoshiro256++ pseudo-random generator with Box-Muller normal sampling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTwoPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Circularly symmetric complex normal with E|z|^2 = variance.
  cplx complex_normal(double variance) {
    const double s = std::sqrt(0.5 * variance);
    const double re = s * normal();
    const double im = s * normal();
    return {re, im};
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace asense
