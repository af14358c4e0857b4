#pragma once

// Shared oracles and random instance builders for the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fsvar/bandlin.hpp"
#include "fsvar/model.hpp"
#include "fsvar/random.hpp"

namespace testutil {

using fsvar::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Random diagonally dominant SPD band matrix.
inline fsvar::BandSymMatrix random_spd_band(Index dim, Index bw, fsvar::RandomSource& rng) {
  fsvar::BandSymMatrix m(dim, bw);
  for (Index j = 0; j < dim; ++j)
    for (Index k = 1; k <= m.bandwidth() && j + k < dim; ++k) m.ref(j + k, j) = rng.uniform(-1.0, 1.0);
  for (Index i = 0; i < dim; ++i) {
    double rowsum = 0.0;
    for (Index j = std::max<Index>(0, i - m.bandwidth()); j <= std::min(dim - 1, i + m.bandwidth()); ++j)
      if (j != i) rowsum += std::abs(m(i, j));
    m.ref(i, i) = rowsum + rng.uniform(0.5, 2.0);
  }
  return m;
}

inline double dense_log_normal(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd d = x - mean;
  const MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2 * M_PI) + logdet + d.dot(llt.solve(d)));
}

/// Kolmogorov-Smirnov distance between a sample and a CDF tabulated on a grid.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    worst = std::max({worst, std::abs(F - static_cast<double>(i) / n),
                      std::abs(F - static_cast<double>(i + 1) / n)});
  }
  return worst;
}


/// Normalized 1-D density tabulated on a uniform grid (trapezoid rule).
struct GridPosterior {
  std::vector<double> x, cdf;
  double mean = 0.0, var = 0.0;

  GridPosterior(double lo, double hi, std::size_t points, const std::function<double(double)>& log_density) {
    x.resize(points);
    std::vector<double> lp(points), w(points);
    double top = -INFINITY;
    for (std::size_t i = 0; i < points; ++i) {
      x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
      lp[i] = log_density(x[i]);
      top = std::max(top, lp[i]);
    }
    for (std::size_t i = 0; i < points; ++i) w[i] = std::exp(lp[i] - top);
    cdf.assign(points, 0.0);
    for (std::size_t i = 1; i < points; ++i) cdf[i] = cdf[i - 1] + 0.5 * (w[i] + w[i - 1]) * (x[i] - x[i - 1]);
    const double z = cdf.back();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 1; i < points; ++i) {
      const double dx = x[i] - x[i - 1];
      m1 += 0.5 * (w[i] * x[i] + w[i - 1] * x[i - 1]) * dx;
      m2 += 0.5 * (w[i] * x[i] * x[i] + w[i - 1] * x[i - 1] * x[i - 1]) * dx;
    }
    for (auto& c : cdf) c /= z;
    mean = m1 / z;
    var = m2 / z - mean * mean;
  }

  double operator()(double v) const {
    if (v <= x.front()) return 0.0;
    if (v >= x.back()) return 1.0;
    const auto it = std::upper_bound(x.begin(), x.end(), v);
    const std::size_t i = static_cast<std::size_t>(it - x.begin());
    const double a = (v - x[i - 1]) / (x[i] - x[i - 1]);
    return cdf[i - 1] + a * (cdf[i] - cdf[i - 1]);
  }
};

/// Log conditional of the log-volatility mean given the path, up to a constant.
inline double log_mu_conditional(double mu, const VectorXd& h, double phi, double sigma2, double m0, double v0) {
  double lp = -0.5 * (mu - m0) * (mu - m0) / v0;
  lp -= 0.5 * (1 - phi * phi) * (h[0] - mu) * (h[0] - mu) / sigma2;
  for (Index t = 1; t < h.size(); ++t) {
    const double e = h[t] - mu - phi * (h[t - 1] - mu);
    lp -= 0.5 * e * e / sigma2;
  }
  return lp;
}

/// Log conditional of the persistence given the path, on (-1, 1).
inline double log_phi_conditional(double phi, const VectorXd& h, double mu, double sigma2, double m0, double v0) {
  if (!(std::abs(phi) < 1.0)) return -INFINITY;
  double lp = -0.5 * (phi - m0) * (phi - m0) / v0 + 0.5 * std::log(1 - phi * phi);
  lp -= 0.5 * (1 - phi * phi) * (h[0] - mu) * (h[0] - mu) / sigma2;
  for (Index t = 1; t < h.size(); ++t) {
    const double e = h[t] - mu - phi * (h[t - 1] - mu);
    lp -= 0.5 * e * e / sigma2;
  }
  return lp;
}

// Small random FSV instances shared by the likelihood tests and the acceptance suite.

inline fsvar::ParamDraw random_theta(Index n, Index r, fsvar::RandomSource& rng) {
  fsvar::ParamDraw th;
  th.coef = MatrixXd::Zero(n + 1, n);
  th.L.resize(n, r);
  for (Index i = 0; i < th.L.size(); ++i) th.L.data()[i] = rng.normal();
  th.mu.resize(n);
  for (Index i = 0; i < n; ++i) th.mu[i] = rng.normal(0.0, 0.5);
  th.phi.resize(n + r);
  th.sigma2.resize(n + r);
  for (Index i = 0; i < n + r; ++i) {
    th.phi[i] = rng.uniform(0.2, 0.95);
    th.sigma2[i] = rng.uniform(0.05, 0.3);
  }
  return th;
}

inline MatrixXd random_matrix(Index rows, Index cols, fsvar::RandomSource& rng, double sd = 1.0) {
  MatrixXd a(rows, cols);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal(0.0, sd);
  return a;
}

// States drawn from their prior, so EM starts from plausible values.
inline MatrixXd prior_states(const fsvar::ParamDraw& th, Index T, fsvar::RandomSource& rng) {
  const Index m = th.phi.size(), n = th.mu.size();
  MatrixXd h(T, m);
  for (Index i = 0; i < m; ++i) {
    const double mean = i < n ? th.mu[i] : 0.0;
    h(0, i) = mean + std::sqrt(th.sigma2[i] / (1 - th.phi[i] * th.phi[i])) * rng.normal();
    for (Index t = 1; t < T; ++t) h(t, i) = mean + th.phi[i] * (h(t - 1, i) - mean) + std::sqrt(th.sigma2[i]) * rng.normal();
  }
  return h;
}

// Residuals simulated from the model at the given states.
inline MatrixXd simulate_resid(const fsvar::ParamDraw& th, const MatrixXd& h, fsvar::RandomSource& rng) {
  const Index T = h.rows(), n = th.L.rows(), r = th.L.cols();
  MatrixXd e(T, n);
  for (Index t = 0; t < T; ++t) {
    VectorXd f(r);
    for (Index j = 0; j < r; ++j) f[j] = std::exp(0.5 * h(t, n + j)) * rng.normal();
    for (Index i = 0; i < n; ++i) e(t, i) = th.L.row(i).dot(f) + std::exp(0.5 * h(t, i)) * rng.normal();
  }
  return e;
}

// Stationary AR(1) covariance of one series, built from autocovariances.
inline MatrixXd ar1_covariance(Index T, double phi, double s2) {
  MatrixXd c(T, T);
  for (Index a = 0; a < T; ++a)
    for (Index b = 0; b < T; ++b) c(a, b) = s2 / (1 - phi * phi) * std::pow(phi, static_cast<double>(std::abs(a - b)));
  return c;
}

inline double max_rel(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

inline MatrixXd fd_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  const Index d = x.size();
  MatrixXd H(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = a; b < d; ++b) {
      auto at = [&](double sa, double sb) {
        VectorXd y = x;
        y[a] += sa;
        y[b] += sb;
        return f(y);
      };
      H(a, b) = H(b, a) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
    }
  return H;
}


}  // namespace testutil
