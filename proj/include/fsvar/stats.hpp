#pragma once

// Scalar densities and normal-tail helpers shared by the samplers and the
// likelihood estimators. Everything here works in log space.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <boost/math/special_functions/erf.hpp>

namespace fsvar::stats {

inline constexpr double log_2pi = 1.8378770664093454835606594728112;
inline constexpr double inf = std::numeric_limits<double>::infinity();

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// log(1 - Phi(x)), accurate far into the upper tail.
inline double log_normal_sf(double x) {
  if (x == inf) return -inf;
  if (x < 30.0) return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
  // Mills-ratio asymptotic expansion.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(x) - 0.5 * log_2pi + std::log(series);
}

inline double log_normal_cdf(double x) { return log_normal_sf(-x); }

/// log(Phi(b) - Phi(a)) for a <= b, stable in both tails.
inline double log_normal_interval(double a, double b) {
  if (!(a < b)) return -inf;
  if (a > 0.0) {
    // Both in the upper tail: Q(a) - Q(b) = Q(a) (1 - Q(b)/Q(a)).
    const double la = log_normal_sf(a);
    const double lb = log_normal_sf(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b < 0.0) return log_normal_interval(-b, -a);
  // Straddles zero: the two tails are each at most 1/2.
  const double lower = 0.5 * std::erfc(-a / std::numbers::sqrt2);
  const double upper = 0.5 * std::erfc(b / std::numbers::sqrt2);
  return std::log1p(-lower - upper);
}

inline double normal_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (log_2pi + std::log(var) + d * d / var);
}

/// Inverse-gamma IG(shape, scale) with density ∝ x^{-shape-1} exp(-scale/x).
inline double log_inverse_gamma_pdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return -inf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

/// Normal(mean, var) truncated to [lo, hi], normalizer included.
inline double log_truncated_normal_pdf(double x, double mean, double var, double lo, double hi) {
  if (x < lo || x > hi) return -inf;
  const double sd = std::sqrt(var);
  return log_normal_pdf(x, mean, var) - log_normal_interval((lo - mean) / sd, (hi - mean) / sd);
}

/// log(mean(exp(v))) with the max shifted out.
inline double log_mean_exp(std::span<const double> v) {
  if (v.empty()) return -inf;
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s / static_cast<double>(v.size()));
}

/// Summary of a set of log importance weights.
struct LogWeightSummary {
  double log_mean = -inf;       ///< log of the average weight
  double log_standard_error = inf;  ///< delta-method SE of log_mean
  double ess = 0.0;             ///< (Σw)² / Σw²
};

inline LogWeightSummary summarize_log_weights(std::span<const double> lw) {
  LogWeightSummary out;
  const auto count = static_cast<double>(lw.size());
  if (lw.empty()) return out;
  const double mx = *std::max_element(lw.begin(), lw.end());
  if (!std::isfinite(mx)) return out;
  double s1 = 0.0;
  double s2 = 0.0;
  for (double x : lw) {
    const double w = std::exp(x - mx);
    s1 += w;
    s2 += w * w;
  }
  const double mean = s1 / count;
  out.log_mean = mx + std::log(mean);
  out.ess = s1 * s1 / s2;
  if (lw.size() > 1) {
    const double var = std::max(0.0, (s2 / count - mean * mean) * count / (count - 1.0));
    out.log_standard_error = std::sqrt(var / count) / mean;
  }
  return out;
}

}  // namespace fsvar::stats
