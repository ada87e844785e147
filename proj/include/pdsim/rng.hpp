// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pdsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic random source. All distribution transforms are written out
/// explicitly (instead of std::*_distribution) so that a seed produces the
/// same stream on every standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  /// Independent stream for a named use within the same run.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(seed) ^ splitmix64(stream + 0x51ed2701ull));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform index in [0, n). Negligible modulo-free bias via the double path.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  }

  /// Exponential with the given mean; strictly positive.
  double exponential(double mean) {
    double u = uniform01();
    double g = -mean * std::log1p(-u);
    return g > 0.0 ? g : mean * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (one value per call; no cached spare, so
  /// the stream position is a pure function of call count).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
  }

  double lognormal(double log_mean, double log_sigma) {
    return std::exp(log_mean + log_sigma * normal());
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace pdsim
