#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, counter), so a matrix entry has the same value whether the
// matrix is generated whole or shard by shard.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tadmm {

/// Independent streams, one per purpose.
enum class Stream : std::uint64_t {
  matrix = 1,
  support = 2,
  noise = 3,
  heterogeneity = 4,
  shuffle = 5,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, Stream stream)
      : key_(splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL))) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal (Box-Muller on counters 2c and 2c+1).
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const {
    return static_cast<std::uint64_t>(uniform(counter) * static_cast<double>(bound)) % bound;
  }

 private:
  std::uint64_t key_;
};

}  // namespace tadmm
