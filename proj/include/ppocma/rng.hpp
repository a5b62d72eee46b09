#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ppocma {

/// Deterministic random stream. All draws go through explicit helpers
/// (instead of std:: distributions) so that a given seed produces the
/// same sequence everywhere, which the reproducibility tests rely on.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Independent stream derived from (seed, stream_id).
  static RandomStream derive(std::uint64_t seed, std::uint64_t stream_id) {
    return RandomStream(mix(seed) ^ mix(stream_id * 0x9E3779B97F4A7C15ull + 1));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n), unbiased.
  std::int64_t uniform_int(std::int64_t n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    std::uint64_t x, r;
    do {
      x = next_u64();
      r = x % un;
    } while (x - r > std::uint64_t(-1) - un + 1);
    return static_cast<std::int64_t>(r);
  }

 private:
  // splitmix64 finalizer, used to spread raw seeds over the full state space
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ppocma
