#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mtlswin {

/// Deterministic random source. Distribution shaping is done by hand on top
/// of the mt19937_64 bit stream so that sequences are identical across
/// standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int64_t randint(int64_t n) { return static_cast<int64_t>(uniform() * static_cast<double>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Normal(0, stddev) resampled until within +/-2 stddev.
  double trunc_normal(double stddev) {
    double v = normal();
    while (std::abs(v) > 2.0) v = normal();
    return stddev * v;
  }

  /// Derive an independent stream; avoids correlated draws across components.
  Rng fork(uint64_t salt) {
    uint64_t s = bits() ^ (salt * 0x9e3779b97f4a7c15ULL);
    return Rng(s);
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = randint(i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mtlswin
