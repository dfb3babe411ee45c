// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace screenlab {

// Counter-style generator: identical streams for identical (seed, index)
// regardless of thread count or platform.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  SplitMix64(std::uint64_t seed, std::uint64_t stream)
      : state(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1))) {
    next();
    next();
  }

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

}  // namespace screenlab
