#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "udaseg/common.hpp"

namespace udaseg {

// Deterministic RNG. std::mt19937_64 is bit-exact across platforms; the
// distribution mappings below are our own so that streams are reproducible
// regardless of standard-library vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed), lineage_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Lemire multiply-shift; bias is
  // negligible for the ranges used here and the mapping is deterministic.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>((static_cast<__uint128_t>(gen_()) * static_cast<__uint128_t>(n)) >> 64);
  }

  // Standard normal via Box-Muller (no sample caching).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent substream derived from the seed this RNG was built from.
  Rng fork(uint64_t stream) const { return Rng(mix_seed(lineage_, stream)); }

 private:
  std::mt19937_64 gen_;
  uint64_t lineage_;
};

}  // namespace udaseg
