#pragma once

// Deterministic random streams. The engine is std::mt19937_64 (bit-exact by
// specification); all distributions are implemented here rather than taken
// from <random>, whose distribution outputs vary across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "whar/base.hpp"

namespace whar {

// splitmix64 finalizer, used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable sub-stream seed for (base seed, purpose tag, index).
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
  return mix64(mix64(seed ^ mix64(tag)) ^ index);
}

// Packs a short name ("shuffle", "morph") into a purpose tag. Eight
// characters at most; collisions would need identical names.
constexpr uint64_t stream_tag(const char* s) {
  uint64_t v = 0;
  for (; *s; ++s) v = (v << 8) | (uint64_t)(unsigned char)*s;
  return v;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1) with 53 random bits
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // standard normal via Box-Muller, second value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * 3.141592653589793 * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  // Gamma(alpha, 1), Marsaglia-Tsang; boosted for alpha < 1
  double gamma(double alpha) {
    check(alpha > 0.0, "gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = uniform();
      if (u <= 0.0) u = 0x1.0p-53;
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 &&
          std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    double s = x + y;
    if (s <= 0.0) return 0.5;  // both underflowed; split the difference
    return x / s;
  }

  // uniform integer in [0, n), bias-free
  int uniform_int(int n) {
    check(n > 0, "uniform_int: n must be positive");
    uint64_t un = (uint64_t)n;
    uint64_t bound = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= bound);
    return (int)(x % un);
  }

  // Fisher-Yates permutation of 0..n-1
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(p[i], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace whar
