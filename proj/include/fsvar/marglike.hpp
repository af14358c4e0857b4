#pragma once

// Marginal likelihood by importance sampling over the static parameters,
// with a product-form importance density fitted to posterior draws by
// maximum likelihood. Each parameter draw needs an integrated likelihood,
// itself estimated by importance sampling over the log-volatilities.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <Eigen/Dense>

#include "fsvar/error.hpp"
#include "fsvar/gibbs.hpp"
#include "fsvar/intlike.hpp"
#include "fsvar/model.hpp"
#include "fsvar/parallel.hpp"
#include "fsvar/random.hpp"
#include "fsvar/stats.hpp"

namespace fsvar {

inline constexpr double kVarianceFloor = 1e-10;
inline constexpr double kPhiClip = 0.999;

/// Shape of the importance family. The first three are products of
/// per-block densities and differ only in the coefficient covariance
/// (diagonal, full within each equation, full over vec(coef)). `full` is one
/// Gaussian over all parameters after mapping them to the real line:
/// log σ², atanh φ, log|L| for sign-restricted loadings, identity otherwise.
enum class FamilyShape { diagonal, per_equation, joint_coef, full };

struct CeFamilyParams {
  FamilyShape shape = FamilyShape::full;
  MatrixXd coef_mean;                   // k×n
  MatrixXd coef_var;                    // k×n (diagonal shape)
  std::vector<MatrixXd> coef_chol;      // lower factors: one per equation, or one for vec(coef)
  MatrixXd loading_mean, loading_var;   // n×r
  SignMatrix signs;
  VectorXd sigma2_shape, sigma2_scale;  // m
  VectorXd mu_mean, mu_var;             // n
  VectorXd phi_mean, phi_var;           // m, truncated to (-1, 1)
  VectorXd full_mean;                   // full shape, unconstrained coordinates
  MatrixXd full_chol;
  double tail_dof = 0.0;                // full shape: Student-t degrees of freedom, 0 for Gaussian
};

// ---------------------------------------------------------------------------
// Unconstrained coordinates for the full shape. Order: vec(coef), non-zero
// loadings column-major, log σ², μ, atanh φ.

inline Index unconstrained_dim(const SignMatrix& signs, Index k, Index n, Index r) {
  Index nl = 0;
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < n; ++i) nl += signs(i, j) != Sign::zero;
  return k * n + nl + 2 * (n + r) + n;
}

/// Maps a draw to the real line; returns log|dz/dθ|.
inline double to_unconstrained(const ParamDraw& d, const SignMatrix& signs, VectorXd& z) {
  const Index k = d.coef.rows(), n = d.n(), r = d.r(), m = n + r;
  z.resize(unconstrained_dim(signs, k, n, r));
  Index o = 0;
  double logjac = 0.0;
  z.head(k * n) = d.beta();
  o += k * n;
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < n; ++i) {
      const Sign sg = signs(i, j);
      if (sg == Sign::zero) continue;
      if (sg == Sign::free) {
        z[o++] = d.L(i, j);
      } else {
        const double a = std::abs(d.L(i, j));
        z[o++] = std::log(a);
        logjac -= std::log(a);
      }
    }
  for (Index i = 0; i < m; ++i) {
    z[o++] = std::log(d.sigma2[i]);
    logjac -= std::log(d.sigma2[i]);
  }
  for (Index i = 0; i < n; ++i) z[o++] = d.mu[i];
  for (Index i = 0; i < m; ++i) {
    z[o++] = std::atanh(d.phi[i]);
    logjac -= std::log1p(-d.phi[i] * d.phi[i]);
  }
  return logjac;
}

inline ParamDraw from_unconstrained(const VectorXd& z, const SignMatrix& signs, Index k, Index n, Index r) {
  const Index m = n + r;
  ParamDraw d;
  Index o = 0;
  d.coef = Eigen::Map<const MatrixXd>(z.data(), k, n);
  o += k * n;
  d.L = MatrixXd::Zero(n, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < n; ++i) {
      const Sign sg = signs(i, j);
      if (sg == Sign::zero) continue;
      const double v = z[o++];
      d.L(i, j) = sg == Sign::free ? v : (sg == Sign::pos ? std::exp(v) : -std::exp(v));
    }
  d.sigma2.resize(m);
  for (Index i = 0; i < m; ++i) d.sigma2[i] = std::exp(z[o++]);
  d.mu = z.segment(o, n);
  o += n;
  d.phi.resize(m);
  for (Index i = 0; i < m; ++i) d.phi[i] = std::tanh(z[o++]);
  return d;
}

/// Inverse-gamma maximum likelihood: profile Newton on the shape after a
/// moment-matched start.
struct InverseGammaFit {
  double shape = 0.0, scale = 0.0;
  double moment_shape = 0.0, moment_scale = 0.0;
};

inline InverseGammaFit fit_inverse_gamma(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double s1 = 0.0, s2 = 0.0, sinv = 0.0, slog = 0.0;
  for (double v : x) {
    if (!(v > 0.0)) throw NonPositiveScale("inverse-gamma fit needs positive draws");
    s1 += v;
    s2 += v * v;
    sinv += 1.0 / v;
    slog += std::log(v);
  }
  const double mean = s1 / n;
  const double var = std::max(s2 / n - mean * mean, kVarianceFloor);
  InverseGammaFit fit;
  fit.moment_shape = mean * mean / var + 2.0;
  fit.moment_scale = mean * (fit.moment_shape - 1.0);
  // log a - ψ(a) = c, with c = log(mean(1/x)) + mean(log x) >= 0 by Jensen.
  const double c = std::log(sinv / n) + slog / n;
  double a = fit.moment_shape;
  if (c > 1e-12) {
    for (int it = 0; it < 100; ++it) {
      const double g = std::log(a) - boost::math::digamma(a) - c;
      const double dg = 1.0 / a - boost::math::trigamma(a);
      // Newton in log a keeps the iterate positive.
      const double step = g / (dg * a);
      double next = a * std::exp(-step);
      if (!std::isfinite(next)) break;
      next = std::clamp(next, a / 10.0, a * 10.0);
      const bool done = std::abs(next - a) < 1e-12 * a;
      a = next;
      if (done) break;
    }
  } else {
    a = 1e8;  // all draws equal: a point mass, approximated by a huge shape
  }
  fit.shape = std::max(a, 1.0 + 1e-6);
  fit.scale = n * fit.shape / sinv;
  return fit;
}

// The full shape is the default. Posterior correlations between blocks
// (loadings against idiosyncratic volatility levels, μ against φ, intercepts
// against lags) leave product families with few effective outer draws.
struct CeFitOptions {
  FamilyShape shape = FamilyShape::full;
  double tail_dof = 0.0;
  std::size_t min_draws = 30;
};

inline std::pair<double, double> gaussian_mle(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double v = 0.0;
  for (double a : x) v += (a - m) * (a - m);
  return {m, std::max(v / n, kVarianceFloor)};
}

inline CeFamilyParams fit_ce_family(const std::vector<ParamDraw>& draws, const SignMatrix& signs,
                                    const CeFitOptions& opt = {}) {
  if (draws.size() < opt.min_draws)
    throw InsufficientDraws("need at least " + std::to_string(opt.min_draws) + " draws to fit the importance density");
  const ParamDraw& first = draws.front();
  const Index k = first.coef.rows(), n = first.n(), r = first.r(), m = n + r;
  const std::size_t N = draws.size();
  CeFamilyParams fam;
  fam.shape = opt.shape;
  fam.tail_dof = opt.tail_dof;
  fam.signs = signs;
  std::vector<double> buf(N);
  auto column = [&](auto get) {
    for (std::size_t s = 0; s < N; ++s) buf[s] = get(draws[s]);
    return gaussian_mle(buf);
  };
  fam.coef_mean.resize(k, n);
  fam.coef_var.resize(k, n);
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < k; ++q) {
      const auto [mu, v] = column([&](const ParamDraw& d) { return d.coef(q, i); });
      fam.coef_mean(q, i) = mu;
      fam.coef_var(q, i) = v;
    }
  auto factor = [](MatrixXd S) {
    S.diagonal() = S.diagonal().cwiseMax(kVarianceFloor);
    Eigen::LLT<MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
      S.diagonal().array() += 1e-8 * S.diagonal().mean();
      llt.compute(S);
      if (llt.info() != Eigen::Success) throw NotPositiveDefinite("importance covariance fit");
    }
    return MatrixXd(llt.matrixL());
  };
  // Two-pass mean/covariance of a vector-valued feature of the draws.
  auto moments = [&](auto feature, VectorXd& mean) {
    VectorXd v;
    feature(draws.front(), v);
    mean = VectorXd::Zero(v.size());
    for (const auto& d : draws) {
      feature(d, v);
      mean += v;
    }
    mean /= static_cast<double>(N);
    MatrixXd S = MatrixXd::Zero(mean.size(), mean.size());
    for (const auto& d : draws) {
      feature(d, v);
      v -= mean;
      S.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
    S.triangularView<Eigen::StrictlyUpper>() = S.transpose();
    return MatrixXd(S / static_cast<double>(N));
  };
  if (opt.shape == FamilyShape::full) {
    for (const auto& d : draws)
      if (!signs.satisfied_by(d.L)) throw ConfigError("draw violates the sign restrictions");
    const MatrixXd S = moments([&](const ParamDraw& d, VectorXd& z) { to_unconstrained(d, signs, z); },
                               fam.full_mean);
    fam.full_chol = factor(S);
  } else if (opt.shape == FamilyShape::per_equation) {
    for (Index i = 0; i < n; ++i) {
      MatrixXd S = MatrixXd::Zero(k, k);
      for (const auto& d : draws) {
        const VectorXd c = d.coef.col(i) - fam.coef_mean.col(i);
        S.noalias() += c * c.transpose();
      }
      fam.coef_chol.push_back(factor(S / static_cast<double>(N)));
    }
  } else if (opt.shape == FamilyShape::joint_coef) {
    VectorXd mean;
    const MatrixXd S = moments([](const ParamDraw& d, VectorXd& b) { b = d.beta(); }, mean);
    fam.coef_chol.push_back(factor(S));
  }
  fam.loading_mean = MatrixXd::Zero(n, r);
  fam.loading_var = MatrixXd::Ones(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) {
      if (signs(i, j) == Sign::zero) continue;
      const auto [mu, v] = column([&](const ParamDraw& d) { return d.L(i, j); });
      fam.loading_mean(i, j) = mu;
      fam.loading_var(i, j) = v;
    }
  fam.sigma2_shape.resize(m);
  fam.sigma2_scale.resize(m);
  fam.phi_mean.resize(m);
  fam.phi_var.resize(m);
  for (Index i = 0; i < m; ++i) {
    for (std::size_t s = 0; s < N; ++s) buf[s] = draws[s].sigma2[i];
    const auto ig = fit_inverse_gamma(buf);
    fam.sigma2_shape[i] = ig.shape;
    fam.sigma2_scale[i] = ig.scale;
    const auto [pm, pv] = column([&](const ParamDraw& d) { return d.phi[i]; });
    fam.phi_mean[i] = std::clamp(pm, -kPhiClip, kPhiClip);
    fam.phi_var[i] = pv;
  }
  fam.mu_mean.resize(n);
  fam.mu_var.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto [mu, v] = column([&](const ParamDraw& d) { return d.mu[i]; });
    fam.mu_mean[i] = mu;
    fam.mu_var[i] = v;
  }
  return fam;
}

// ---------------------------------------------------------------------------
// Densities

inline double log_gaussian_full(const VectorXd& x, const VectorXd& mean, const MatrixXd& chol) {
  const VectorXd z = chol.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * static_cast<double>(x.size()) * stats::log_2pi -
         chol.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

/// Multivariate Student-t with scale matrix chol·cholᵀ.
inline double log_student_full(const VectorXd& x, const VectorXd& mean, const MatrixXd& chol, double dof) {
  const double d = static_cast<double>(x.size());
  const VectorXd z = chol.triangularView<Eigen::Lower>().solve(x - mean);
  return std::lgamma(0.5 * (dof + d)) - std::lgamma(0.5 * dof) - 0.5 * d * std::log(dof * M_PI) -
         chol.diagonal().array().log().sum() - 0.5 * (dof + d) * std::log1p(z.squaredNorm() / dof);
}

/// Loadings density with each entry truncated to its sign region; zero
/// entries are excluded (they are fixed, not random).
inline double log_loading_density(const MatrixXd& L, const MatrixXd& mean, const MatrixXd& var,
                                  const SignMatrix& signs) {
  double lp = 0.0;
  for (Index i = 0; i < L.rows(); ++i)
    for (Index j = 0; j < L.cols(); ++j) {
      if (signs(i, j) == Sign::zero) {
        if (L(i, j) != 0.0) return -stats::inf;
        continue;
      }
      const auto [lo, hi] = signs.bounds(i, j);
      lp += stats::log_truncated_normal_pdf(L(i, j), mean(i, j), var(i, j), lo, hi);
    }
  return lp;
}

inline double log_ce_density(const CeFamilyParams& fam, const ParamDraw& d) {
  const Index n = d.n(), m = d.phi.size();
  if (fam.shape == FamilyShape::full) {
    if (!fam.signs.satisfied_by(d.L) || !(d.phi.cwiseAbs().maxCoeff() < 1.0) || !(d.sigma2.minCoeff() > 0.0))
      return -stats::inf;
    VectorXd z;
    const double logjac = to_unconstrained(d, fam.signs, z);
    const double lz = fam.tail_dof > 0.0 ? log_student_full(z, fam.full_mean, fam.full_chol, fam.tail_dof)
                                         : log_gaussian_full(z, fam.full_mean, fam.full_chol);
    return lz + logjac;
  }
  double lp = 0.0;
  switch (fam.shape) {
    case FamilyShape::joint_coef:
      lp += log_gaussian_full(d.beta(), Eigen::Map<const VectorXd>(fam.coef_mean.data(), fam.coef_mean.size()),
                              fam.coef_chol.front());
      break;
    case FamilyShape::per_equation:
      for (Index i = 0; i < n; ++i)
        lp += log_gaussian_full(d.coef.col(i), fam.coef_mean.col(i), fam.coef_chol[static_cast<std::size_t>(i)]);
      break;
    default:
      for (Index i = 0; i < n; ++i)
        for (Index q = 0; q < d.coef.rows(); ++q)
          lp += stats::log_normal_pdf(d.coef(q, i), fam.coef_mean(q, i), fam.coef_var(q, i));
  }
  lp += log_loading_density(d.L, fam.loading_mean, fam.loading_var, fam.signs);
  for (Index i = 0; i < m; ++i) {
    lp += stats::log_inverse_gamma_pdf(d.sigma2[i], fam.sigma2_shape[i], fam.sigma2_scale[i]);
    lp += stats::log_truncated_normal_pdf(d.phi[i], fam.phi_mean[i], fam.phi_var[i], -1.0, 1.0);
  }
  for (Index i = 0; i < n; ++i) lp += stats::log_normal_pdf(d.mu[i], fam.mu_mean[i], fam.mu_var[i]);
  return lp;
}

inline ParamDraw sample_ce_family(const CeFamilyParams& fam, RandomSource& rng) {
  const Index k = fam.coef_mean.rows(), n = fam.coef_mean.cols(), r = fam.loading_mean.cols(), m = n + r;
  if (fam.shape == FamilyShape::full) {
    VectorXd e = fam.full_chol * rng.normal_vector(fam.full_mean.size());
    if (fam.tail_dof > 0.0) e /= std::sqrt(rng.gamma(0.5 * fam.tail_dof, 2.0) / fam.tail_dof);
    const VectorXd z = fam.full_mean + e;
    return from_unconstrained(z, fam.signs, k, n, r);
  }
  ParamDraw d;
  d.coef.resize(k, n);
  switch (fam.shape) {
    case FamilyShape::joint_coef: {
      const VectorXd b = fam.coef_chol.front() * rng.normal_vector(k * n);
      d.coef = fam.coef_mean + Eigen::Map<const MatrixXd>(b.data(), k, n);
      break;
    }
    case FamilyShape::per_equation:
      for (Index i = 0; i < n; ++i)
        d.coef.col(i) = fam.coef_mean.col(i) + fam.coef_chol[static_cast<std::size_t>(i)] * rng.normal_vector(k);
      break;
    default:
      for (Index i = 0; i < n; ++i)
        for (Index q = 0; q < k; ++q) d.coef(q, i) = rng.normal(fam.coef_mean(q, i), std::sqrt(fam.coef_var(q, i)));
  }
  d.L = MatrixXd::Zero(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) {
      if (fam.signs(i, j) == Sign::zero) continue;
      const auto [lo, hi] = fam.signs.bounds(i, j);
      double v;
      do {
        v = truncated_normal(fam.loading_mean(i, j), std::sqrt(fam.loading_var(i, j)), lo, hi, rng);
      } while (v == 0.0 && fam.signs(i, j) != Sign::free);  // strict signs
      d.L(i, j) = v;
    }
  d.sigma2.resize(m);
  d.phi.resize(m);
  for (Index i = 0; i < m; ++i) {
    d.sigma2[i] = rng.inverse_gamma(fam.sigma2_shape[i], fam.sigma2_scale[i]);
    double ph;
    do {
      ph = truncated_normal(fam.phi_mean[i], std::sqrt(fam.phi_var[i]), -1.0, 1.0, rng);
    } while (!(std::abs(ph) < 1.0));
    d.phi[i] = ph;
  }
  d.mu.resize(n);
  for (Index i = 0; i < n; ++i) d.mu[i] = rng.normal(fam.mu_mean[i], std::sqrt(fam.mu_var[i]));
  return d;
}

/// Prior density, sign truncation normalizers included.
inline double log_prior_density(const PriorSpec& pr, const SignMatrix& signs, const ParamDraw& d) {
  const Index n = d.n(), m = d.phi.size();
  double lp = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < d.coef.rows(); ++q)
      lp += stats::log_normal_pdf(d.coef(q, i), pr.beta_mean(q, i), pr.beta_var(q, i));
  lp += log_loading_density(d.L, pr.loading_mean, pr.loading_var, signs);
  for (Index i = 0; i < m; ++i) {
    lp += stats::log_inverse_gamma_pdf(d.sigma2[i], pr.sigma2_shape[i], pr.sigma2_scale[i]);
    lp += stats::log_truncated_normal_pdf(d.phi[i], pr.phi_mean[i], pr.phi_var[i], -1.0, 1.0);
  }
  for (Index i = 0; i < n; ++i) lp += stats::log_normal_pdf(d.mu[i], pr.mu_mean[i], pr.mu_var[i]);
  return lp;
}

// ---------------------------------------------------------------------------
// Estimator

struct MarginalLikelihoodOptions {
  int R2 = 200;
  int R1_start = 10;
  int R1_cap = 640;
  double target_log_variance = 1.0;
  FamilyShape shape = FamilyShape::full;
  double tail_dof = 0.0;
  unsigned threads = 1;
  EmOptions em;
  HessianRoute route = HessianRoute::em;
  bool keep_log_weights = false;
  bool throw_on_degenerate = true;  // outer weights with ESS < 2
};

struct MarginalLikelihoodResult {
  double log_estimate = -stats::inf;
  double standard_error = stats::inf;  // of the log estimate
  double ess = 0.0;
  int R2 = 0;
  std::vector<int> R1_used;           // per outer draw
  int degenerate_inner = 0;           // inner estimates still degenerate at the cap
  int hessian_fallbacks = 0;
  std::vector<double> log_weights;    // optional dump
};

struct OuterDrawOutcome {
  double log_weight = -stats::inf;
  int R1 = 0;
  bool degenerate = false;
  bool fallback = false;
};

/// Integrated likelihood with R1 doubled until the variance of its log is
/// at most the target, or the cap is reached.
inline OuterDrawOutcome adaptive_integrated_likelihood(const VarData& data, const ParamDraw& th,
                                                       RandomSource& rng,
                                                       const MarginalLikelihoodOptions& opt,
                                                       const MatrixXd* warm) {
  OuterDrawOutcome out;
  IntegratedLikelihoodOptions io;
  io.em = opt.em;
  io.route = opt.route;
  io.warm_start = warm;
  const MatrixXd resid = var_residuals(data, th.coef);
  for (int R1 = opt.R1_start;; R1 *= 2) {
    const bool last = R1 * 2 > opt.R1_cap;
    io.throw_on_degenerate = !last;
    out.R1 = R1;
    try {
      const auto il = integrated_likelihood(resid, th, R1, rng, io);
      out.fallback = il.hessian_fallback;
      out.log_weight = il.log_estimate;
      out.degenerate = il.ess < 2.0;
      const double v = il.standard_error * il.standard_error;
      if (last || v <= opt.target_log_variance) return out;
    } catch (const DegenerateWeights&) {
      if (last) throw;
    }
  }
}

inline MarginalLikelihoodResult marginal_likelihood(const VarData& data, const ModelSpec& spec,
                                                    const McmcChain& chain, RandomSource& rng,
                                                    const MarginalLikelihoodOptions& opt = {}) {
  if (chain.draws.empty()) throw InsufficientDraws("empty chain");
  if (opt.R2 < 2) throw ConfigError("R2 must be at least 2");
  CeFitOptions fo;
  fo.shape = opt.shape;
  fo.tail_dof = opt.tail_dof;
  const CeFamilyParams fam = fit_ce_family(chain.draws, spec.signs, fo);
  std::optional<MatrixXd> warm;
  if (!chain.states.empty()) warm = chain.posterior_mean_h();

  std::vector<OuterDrawOutcome> outcomes(static_cast<std::size_t>(opt.R2));
  const RandomSource base = rng.split(0x6d6c);
  parallel_for(outcomes.size(), opt.threads, [&](std::size_t s) {
    RandomSource local = base.split(s);
    const ParamDraw th = sample_ce_family(fam, local);
    const double lg = log_ce_density(fam, th);
    const double lp = log_prior_density(spec.prior, spec.signs, th);
    OuterDrawOutcome o = adaptive_integrated_likelihood(data, th, local, opt, warm ? &*warm : nullptr);
    o.log_weight += lp - lg;
    outcomes[s] = o;
  });

  MarginalLikelihoodResult res;
  res.R2 = opt.R2;
  std::vector<double> lw;
  for (const auto& o : outcomes) {
    lw.push_back(o.log_weight);
    res.R1_used.push_back(o.R1);
    res.degenerate_inner += o.degenerate;
    res.hessian_fallbacks += o.fallback;
  }
  const auto sum = stats::summarize_log_weights(lw);
  res.log_estimate = sum.log_mean;
  res.standard_error = sum.log_standard_error;
  res.ess = sum.ess;
  if (opt.keep_log_weights) res.log_weights = lw;
  if (opt.throw_on_degenerate && !(sum.ess >= 2.0))
    throw DegenerateWeights("marginal likelihood weights degenerate", sum.ess);
  return res;
}

// ---------------------------------------------------------------------------
// Factor-count selection

struct SelectionSettings {
  McmcSettings mcmc;
  MarginalLikelihoodOptions ml;
  MinnesotaOptions minnesota;
  SvPriorOptions sv;
};

struct CandidateResult {
  Index r = 0;
  bool failed = false;
  std::string error;
  double log_ml = -stats::inf;
  double standard_error = stats::inf;
  double ess = 0.0;
  std::vector<int> R1_used;
};

/// Rank first by log marginal likelihood (descending), ties to smaller r;
/// failed candidates go last.
inline void rank_candidates(std::vector<CandidateResult>& c) {
  std::stable_sort(c.begin(), c.end(), [](const CandidateResult& a, const CandidateResult& b) {
    if (a.failed != b.failed) return !a.failed;
    if (a.log_ml != b.log_ml) return a.log_ml > b.log_ml;
    return a.r < b.r;
  });
}

/// Unrestricted loadings for each candidate factor count; chains are run in
/// reduced form since only the likelihood matters here.
inline std::vector<CandidateResult> select_factor_count(const MatrixXd& raw, Index p,
                                                        const std::vector<Index>& candidates,
                                                        const SelectionSettings& settings) {
  if (candidates.empty()) throw ConfigError("no candidate factor counts");
  const VarData data = make_var_data(raw, p);
  std::vector<CandidateResult> out;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    CandidateResult cr;
    cr.r = candidates[c];
    try {
      ModelSpec spec;
      spec.n = raw.cols();
      spec.p = p;
      spec.r = cr.r;
      spec.prior = default_prior(raw, p, cr.r, settings.minnesota, settings.sv);
      spec.signs = SignMatrix::unrestricted(spec.n, cr.r);
      McmcSettings ms = settings.mcmc;
      ms.reduced_form = true;
      ms.seed = settings.mcmc.seed + 7919 * static_cast<std::uint64_t>(cr.r);
      const McmcChain chain = run_chain(data, spec, ms);
      RandomSource rng(ms.seed ^ 0xa5a5a5a5ULL);
      const auto ml = marginal_likelihood(data, spec, chain, rng, settings.ml);
      cr.log_ml = ml.log_estimate;
      cr.standard_error = ml.standard_error;
      cr.ess = ml.ess;
      cr.R1_used = ml.R1_used;
    } catch (const std::exception& e) {
      cr.failed = true;
      cr.error = e.what();
    }
    out.push_back(std::move(cr));
  }
  rank_candidates(out);
  return out;
}

}  // namespace fsvar
