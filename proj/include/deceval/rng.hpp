#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace deceval {

// Deterministic splittable generator. std:: engines are portable but the
// distributions are not, and every seeded result in reports must replay
// bit-for-bit, so sampling is done here from raw uniforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t x = (state_ += 0x9e3779b97f4a7c15ull);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Child stream independent of subsequent draws from this one.
  Rng split(std::uint64_t tag) {
    std::uint64_t s = next_u64();
    Rng child(s ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
    child.next_u64();
    return child;
  }

  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  int uniform_int(int n) {  // in [0, n)
    return int(next_u64() % std::uint64_t(n));
  }

  double normal() {
    // Box-Muller; discards the second variate to keep the stream simple.
    double u1 = uniform(), u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double gamma(double alpha) {
    // Marsaglia-Tsang; alpha < 1 boosted via G(a) = G(a+1) * U^(1/a).
    if (alpha < 1.0) {
      double u = uniform();
      if (u <= 0.0) u = 0x1.0p-53;
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u <= 0.0) u = 0x1.0p-53;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Simplex draw; all weights > 0 afterwards (concentration > 0 required).
  std::vector<double> dirichlet(int k, double concentration) {
    std::vector<double> w(k);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      double g = gamma(concentration);
      if (g <= 0.0) g = 1e-300;
      w[i] = g;
      total += g;
    }
    for (double& v : w) v /= total;
    return w;
  }

  // Index draw from nonnegative weights summing to ~1.
  int discrete(const std::vector<double>& w) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return int(i);
    }
    return int(w.size()) - 1;
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for content-keyed fold assignment.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

}  // namespace deceval
