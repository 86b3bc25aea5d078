#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace guidance {

// Counter-style deterministic RNG. Every consumer owns its own stream,
// keyed by mixing a base seed with stream tags, so results never depend
// on scheduling or on how many draws another consumer made.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Mix a seed with a stream tag into a new seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0xD1B54A32D192ED03ull + tag * 0x2545F4914F6CDD1Dull);
  return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
  return derive_seed(derive_seed(seed, tag_a), tag_b);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}

/// Self-contained generator: splitmix64 core, Box-Muller normals.
/// Bit-identical across platforms and thread schedules.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();  // log(0) guard
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Stream tags; one per independent noise consumer.
namespace stream {
inline constexpr std::uint64_t kObservation = 1;
inline constexpr std::uint64_t kRolloutNoise = 2;
inline constexpr std::uint64_t kCollectInit = 3;
inline constexpr std::uint64_t kCollectControl = 4;
inline constexpr std::uint64_t kWeightInit = 5;
inline constexpr std::uint64_t kBatchShuffle = 6;
inline constexpr std::uint64_t kAugmentation = 7;
inline constexpr std::uint64_t kScenarioDraw = 8;
inline constexpr std::uint64_t kMonteCarlo = 9;
}  // namespace stream

}  // namespace guidance
