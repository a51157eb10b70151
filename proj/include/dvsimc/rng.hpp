#pragma once

#include <cstdint>

namespace dvsimc {

/// Counter-based generator: draw n is a pure function of (seed, n), so any
/// sample of a noise stream can be reproduced without replaying the prefix.
/// Mixing function is SplitMix64.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t bits(std::uint64_t counter) const noexcept {
    std::uint64_t z = seed_ + (counter + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(counter);
  }

 private:
  std::uint64_t seed_;
};

}  // namespace dvsimc
