#ifndef CAPEVAL_RANDOM_HPP
#define CAPEVAL_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace capeval {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Seed for a named sub-stream ("bootstrap", "pascal", ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return mix64(seed ^ fnv1a64(label));
}

/// Seed for the i-th item of a stream, e.g. one bootstrap iteration.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ index);
}

/// Counter-based generator: the k-th output is mix64(key + k * golden), so any
/// stream can be reproduced from its key alone, independent of threading.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  constexpr std::uint64_t next() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ull);
  }

  /// Uniform integer in [0, bound) by rejection; bound > 0.
  constexpr std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool coin() { return (next() >> 63) != 0; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace capeval

#endif  // CAPEVAL_RANDOM_HPP
