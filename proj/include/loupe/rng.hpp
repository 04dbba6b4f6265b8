#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace loupe {

// Deterministic RNG. The engine (mt19937_64) has standard-specified output,
// and the distributions below are hand-rolled so the same seed yields the
// same stream regardless of standard-library vendor. std::*_distribution is
// implementation-defined and must not be used anywhere in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix(seed)), seed_base_(mix(seed)) {}

  // Derives an independent stream, e.g. one per video or per pass.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(seed_base_ + 0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller; second value cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  // splitmix64 finalizer, decorrelates nearby seeds before feeding the engine
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
  std::uint64_t seed_base_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace loupe
