#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "fsvar/stats.hpp"

namespace fsvar {

/// Seedable generator threaded explicitly through every stochastic routine.
///
/// A RandomSource is single-threaded. Parallel work takes independent
/// streams from `split`, which depends only on the construction seed and the
/// stream index, never on how many numbers have been drawn so far. Results
/// are therefore identical regardless of the number of worker threads.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x5eedu};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }

  RandomSource split(std::uint64_t stream) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
    std::uint64_t child = 0;
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    child = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return RandomSource(child);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential() { return -std::log1p(-uniform()); }

  /// Gamma(shape, scale) with mean shape*scale.
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }

  /// Inverse-gamma IG(shape, scale), density ∝ x^{-shape-1} exp(-scale/x).
  double inverse_gamma(double shape, double scale) { return 1.0 / gamma(shape, 1.0 / scale); }

  Eigen::VectorXd normal_vector(Eigen::Index size) {
    Eigen::VectorXd z(size);
    for (Eigen::Index i = 0; i < size; ++i) z[i] = normal();
    return z;
  }

  std::size_t categorical(const double* weights, std::size_t count) {
    double total = 0.0;
    for (std::size_t k = 0; k < count; ++k) total += weights[k];
    double u = uniform() * total;
    for (std::size_t k = 0; k + 1 < count; ++k) {
      if (u < weights[k]) return k;
      u -= weights[k];
    }
    return count - 1;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

namespace detail {

// Upper-tail sampler for l > 0 via a Rayleigh proposal.
inline double normal_tail(double l, double u, RandomSource& rng) {
  const double c = 0.5 * l * l;
  const double f = std::expm1(c - 0.5 * u * u);
  for (;;) {
    const double x = c - std::log1p(rng.uniform() * f);
    const double v = rng.uniform();
    if (v * v * x <= c) return std::sqrt(2.0 * x);
  }
}

}  // namespace detail

/// Standard normal truncated to [lo, hi]; exact in both tails.
inline double truncated_standard_normal(double lo, double hi, RandomSource& rng) {
  constexpr double tail_cut = 0.66;
  if (lo > tail_cut) return detail::normal_tail(lo, hi, rng);
  if (hi < -tail_cut) return -detail::normal_tail(-hi, -lo, rng);
  if (hi - lo > 2.0) {
    for (;;) {
      const double x = rng.normal();
      if (x >= lo && x <= hi) return x;
    }
  }
  // Short interval near the centre: inverse transform is accurate here.
  const double pl = stats::normal_cdf(lo);
  const double pu = stats::normal_cdf(hi);
  const double x = stats::normal_quantile(pl + (pu - pl) * rng.uniform());
  return std::clamp(x, lo, hi);
}

inline double truncated_normal(double mean, double sd, double lo, double hi, RandomSource& rng) {
  return mean + sd * truncated_standard_normal((lo - mean) / sd, (hi - mean) / sd, rng);
}

}  // namespace fsvar
