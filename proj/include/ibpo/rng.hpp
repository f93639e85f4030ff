// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cstdint>
#include <random>

namespace ibpo {

// Deterministic RNG handle. All draws are reductions of the raw mt19937_64
// output, so sequences never depend on the standard library's distribution
// implementations (uniform_int_distribution etc. are not reproducible across
// toolchains). split() derives an independent substream from the construction
// seed alone, independent of how much of this stream has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : base_seed_(seed), engine_(mix(seed, 0x243F6A8885A308D3ull)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n > 0. Modulo bias is negligible for the
  // small n used here.
  int next_int(int n) {
    assert(n > 0);
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  Rng split(std::uint64_t stream) const { return Rng(mix(base_seed_, stream)); }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a + 0x9E3779B97F4A7C15ull) ^ b);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
};

}  // namespace ibpo
