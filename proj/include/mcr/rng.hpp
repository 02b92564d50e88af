// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Seeded random number generation with an explicit, serializable state.
// Standard-library distributions are implementation-defined, so every draw
// here is spelled out: results are bit-stable across compilers and platforms,
// which is what makes seeded corpora, training runs and checkpoints
// reproducible byte for byte.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mcr {

/// SplitMix64 mixing step. Used for seeding and for deriving independent
/// sub-stream seeds from (seed, index...) tuples.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Combine a seed with stream labels into a fresh sub-stream seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

/// xoshiro256++ generator. 4x64-bit state, trivially serializable.
class Rng {
 public:
  using state_type = std::array<std::uint64_t, 4>;

  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : state_) {
      x = splitmix64(x);
      w = x;
    }
  }

  static Rng from_state(const state_type& s) {
    Rng r;
    r.state_ = s;
    return r;
  }

  const state_type& state() const { return state_; }

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

  /// Uniform double in [0, 1), 53 mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be >= 1.
  std::uint64_t uniform_below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection; unbiased and deterministic.
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = -n % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform integer in [lo, hi], inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// One standard normal draw (Box-Muller; consumes two uniforms).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fill a span with i.i.d. standard normal values, two per Box-Muller pair.
  void fill_normal(std::span<double> out) {
    std::size_t i = 0;
    while (i + 1 < out.size()) {
      const double u1 = 1.0 - uniform();
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      out[i++] = r * std::cos(2.0 * std::numbers::pi * u2);
      out[i++] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    if (i < out.size()) out[i] = normal();
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  state_type state_{};
};

}  // namespace mcr
