#pragma once

// Posterior sampler: factors, coefficients with loadings, log-volatility
// paths, then the three AR(1) parameter blocks, in that order every sweep.

#include <array>
#include <cstdint>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsvar/bandlin.hpp"
#include "fsvar/error.hpp"
#include "fsvar/model.hpp"
#include "fsvar/random.hpp"
#include "fsvar/stats.hpp"
#include "fsvar/tmvn.hpp"

namespace fsvar {

// Seven-component normal mixture approximating log chi-square(1).
namespace mixture {
inline constexpr std::array<double, 7> weight = {0.00730, 0.10556, 0.00002, 0.04395,
                                                 0.34001, 0.24566, 0.25750};
inline constexpr std::array<double, 7> mean = {-10.12999 - 1.2704, -3.97281 - 1.2704,
                                               -8.56686 - 1.2704,  2.77786 - 1.2704,
                                               0.61942 - 1.2704,   1.79518 - 1.2704,
                                               -1.08819 - 1.2704};
inline constexpr std::array<double, 7> var = {5.79596, 2.61369, 5.17950, 0.16735,
                                              0.64009, 0.34023, 1.26261};
inline constexpr double offset = 1e-4;
}  // namespace mixture

/// Tridiagonal precision of a stationary AR(1) path of length T.
inline BandSymMatrix ar1_precision(Index T, double phi, double sigma2) {
  BandSymMatrix q(T, T > 1 ? 1 : 0);
  if (T == 1) {
    q.ref(0, 0) = (1.0 - phi * phi) / sigma2;
    return q;
  }
  for (Index t = 0; t < T; ++t) {
    q.ref(t, t) = (t == 0 || t == T - 1) ? 1.0 / sigma2 : (1.0 + phi * phi) / sigma2;
    if (t + 1 < T) q.ref(t + 1, t) = -phi / sigma2;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Step 1: factors

/// Draw the T×r factor matrix given residuals E = Y - XB and log-volatilities.
inline MatrixXd sample_factors(const MatrixXd& resid, const MatrixXd& L, const MatrixXd& h,
                               RandomSource& rng) {
  const Index T = resid.rows(), n = resid.cols(), r = L.cols();
  if (r == 0) return MatrixXd(T, 0);
  if (L.rows() != n || h.rows() != T || h.cols() != n + r)
    throw DimensionMismatch("sample_factors inputs");
  BandSymMatrix K(T * r, r - 1);
  VectorXd shift(T * r);
  for (Index t = 0; t < T; ++t) {
    const VectorXd wy = (-h.row(t).head(n)).array().exp().transpose();
    MatrixXd Kt = L.transpose() * wy.asDiagonal() * L;
    for (Index j = 0; j < r; ++j) Kt(j, j) += std::exp(-h(t, n + j));
    shift.segment(t * r, r) = L.transpose() * wy.cwiseProduct(resid.row(t).transpose());
    for (Index a = 0; a < r; ++a)
      for (Index b = 0; b <= a; ++b) K.ref(t * r + a, t * r + b) = Kt(a, b);
  }
  const auto g = GaussianInPrecisionForm::from_canonical(std::move(K), shift);
  const VectorXd draw = precision_sample(g, rng);
  MatrixXd F(T, r);
  for (Index t = 0; t < T; ++t) F.row(t) = draw.segment(t * r, r).transpose();
  return F;
}

// ---------------------------------------------------------------------------
// Step 2: coefficients and loadings, one equation at a time

struct EquationPrior {
  VectorXd beta_mean, beta_var;        // k
  VectorXd loading_mean, loading_var;  // r
};

inline EquationPrior equation_prior(const PriorSpec& pr, Index i) {
  return {pr.beta_mean.col(i), pr.beta_var.col(i), pr.loading_mean.row(i).transpose(),
          pr.loading_var.row(i).transpose()};
}

struct BetaLoadingDraw {
  VectorXd beta;
  VectorXd loading;
  bool exact = true;
};

/// Joint draw of (β_i, l_i). Zero-restricted loadings are dropped from the
/// regression; the remaining signed loadings are drawn from their truncated
/// marginal, then everything else from the Gaussian conditional.
inline BetaLoadingDraw sample_beta_loadings(const VectorXd& y, const MatrixXd& X, const MatrixXd& F,
                                            const VectorXd& h, const EquationPrior& prior,
                                            const SignMatrix& signs, Index row,
                                            RandomSource& rng,
                                            const VectorXd* current_loading = nullptr) {
  const Index T = y.size(), k = X.cols(), r = F.cols();
  if (X.rows() != T || F.rows() != T || h.size() != T) throw DimensionMismatch("equation data");
  std::vector<Index> free_cols;
  for (Index j = 0; j < r; ++j)
    if (signs(row, j) != Sign::zero) free_cols.push_back(j);
  const Index q = static_cast<Index>(free_cols.size());
  const Index d = k + q;

  MatrixXd Z(T, d);
  Z.leftCols(k) = X;
  VectorXd pmean(d), pvar(d);
  pmean.head(k) = prior.beta_mean;
  pvar.head(k) = prior.beta_var;
  for (Index c = 0; c < q; ++c) {
    const Index j = free_cols[static_cast<std::size_t>(c)];
    Z.col(k + c) = F.col(j);
    pmean[k + c] = prior.loading_mean[j];
    pvar[k + c] = prior.loading_var[j];
  }
  const VectorXd w = (-h).array().exp();
  MatrixXd K = Z.transpose() * w.asDiagonal() * Z;
  K.diagonal() += pvar.cwiseInverse();
  const VectorXd rhs = pmean.cwiseQuotient(pvar) + Z.transpose() * w.cwiseProduct(y);
  Eigen::LLT<MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("coefficient posterior precision");
  const VectorXd mean = llt.solve(rhs);

  std::vector<Index> signed_idx, rest_idx;
  for (Index c = 0; c < d; ++c) {
    if (c >= k) {
      const Sign s = signs(row, free_cols[static_cast<std::size_t>(c - k)]);
      if (s == Sign::pos || s == Sign::neg) {
        signed_idx.push_back(c);
        continue;
      }
    }
    rest_idx.push_back(c);
  }

  VectorXd theta(d);
  bool exact = true;
  if (signed_idx.empty()) {
    theta = mean + llt.matrixU().solve(rng.normal_vector(d));
  } else {
    const Index s = static_cast<Index>(signed_idx.size());
    const Index m = d - s;
    const MatrixXd cov = llt.solve(MatrixXd::Identity(d, d));
    MatrixXd cov_ss(s, s);
    VectorXd mean_s(s), lo(s), hi(s), cur(s);
    bool have_cur = current_loading != nullptr;
    for (Index a = 0; a < s; ++a) {
      const Index ia = signed_idx[static_cast<std::size_t>(a)];
      mean_s[a] = mean[ia];
      for (Index b = 0; b < s; ++b) cov_ss(a, b) = cov(ia, signed_idx[static_cast<std::size_t>(b)]);
      const Index j = free_cols[static_cast<std::size_t>(ia - k)];
      const auto [l, u] = signs.bounds(row, j);
      lo[a] = l;
      hi[a] = u;
      if (have_cur) {
        cur[a] = (*current_loading)[j];
        if (!(cur[a] > l && cur[a] < u)) have_cur = false;
      }
    }
    const TmvnDraw ts = sample_truncated_mvn(mean_s, cov_ss, lo, hi, rng, have_cur ? &cur : nullptr);
    exact = ts.exact;
    for (Index a = 0; a < s; ++a) theta[signed_idx[static_cast<std::size_t>(a)]] = ts.value[a];
    if (m > 0) {
      MatrixXd Krr(m, m), Krs(m, s);
      VectorXd mean_r(m);
      for (Index a = 0; a < m; ++a) {
        const Index ia = rest_idx[static_cast<std::size_t>(a)];
        mean_r[a] = mean[ia];
        for (Index b = 0; b < m; ++b) Krr(a, b) = K(ia, rest_idx[static_cast<std::size_t>(b)]);
        for (Index b = 0; b < s; ++b) Krs(a, b) = K(ia, signed_idx[static_cast<std::size_t>(b)]);
      }
      Eigen::LLT<MatrixXd> lr(Krr);
      if (lr.info() != Eigen::Success) throw NotPositiveDefinite("conditional coefficient precision");
      const VectorXd cmean = mean_r - lr.solve(Krs * (ts.value - mean_s));
      const VectorXd draw = cmean + lr.matrixU().solve(rng.normal_vector(m));
      for (Index a = 0; a < m; ++a) theta[rest_idx[static_cast<std::size_t>(a)]] = draw[a];
    }
  }

  BetaLoadingDraw out;
  out.exact = exact;
  out.beta = theta.head(k);
  out.loading = VectorXd::Zero(r);
  for (Index c = 0; c < q; ++c) out.loading[free_cols[static_cast<std::size_t>(c)]] = theta[k + c];
  return out;
}

// ---------------------------------------------------------------------------
// Step 3: log-volatility paths

/// Draw one log-volatility path given the series whose conditional variance
/// is exp(h_t), via the mixture representation and a tridiagonal precision.
inline VectorXd sample_volatility_path(const VectorXd& z, const VectorXd& h_current, double mu,
                                       double phi, double sigma2, RandomSource& rng) {
  const Index T = z.size();
  if (h_current.size() != T) throw DimensionMismatch("volatility path length");
  VectorXd ystar(T);
  for (Index t = 0; t < T; ++t) ystar[t] = std::log(z[t] * z[t] + mixture::offset);
  BandSymMatrix K = ar1_precision(T, phi, sigma2);
  VectorXd shift = K.multiply(VectorXd::Constant(T, mu));
  std::array<double, 7> prob{};
  for (Index t = 0; t < T; ++t) {
    double mx = -stats::inf;
    for (std::size_t j = 0; j < 7; ++j) {
      const double d = ystar[t] - h_current[t] - mixture::mean[j];
      prob[j] = std::log(mixture::weight[j]) - 0.5 * std::log(mixture::var[j]) -
                0.5 * d * d / mixture::var[j];
      mx = std::max(mx, prob[j]);
    }
    for (auto& v : prob) v = std::exp(v - mx);
    const std::size_t s = rng.categorical(prob.data(), prob.size());
    K.add(t, t, 1.0 / mixture::var[s]);
    shift[t] += (ystar[t] - mixture::mean[s]) / mixture::var[s];
  }
  const auto g = GaussianInPrecisionForm::from_canonical(std::move(K), shift);
  return precision_sample(g, rng);
}

// ---------------------------------------------------------------------------
// Steps 4-6: AR(1) parameters of one log-volatility series

struct SvHyper {
  double mu_mean = 0.0, mu_var = 10.0;
  double phi_mean = 0.95, phi_var = 1.0;
  double shape = 5.0, scale = 0.04;
};

inline SvHyper sv_hyper(const PriorSpec& pr, Index i) {
  const Index n = pr.mu_mean.size();
  SvHyper s;
  if (i < n) {
    s.mu_mean = pr.mu_mean[i];
    s.mu_var = pr.mu_var[i];
  }
  s.phi_mean = pr.phi_mean[i];
  s.phi_var = pr.phi_var[i];
  s.shape = pr.sigma2_shape[i];
  s.scale = pr.sigma2_scale[i];
  return s;
}

/// Posterior inverse-gamma scale for σ²: prior scale plus half the squared
/// state innovations, the first one at its stationary weight.
inline double sigma2_posterior_scale(const VectorXd& h, double mu, double phi, double scale) {
  const Index T = h.size();
  double ss = (1.0 - phi * phi) * (h[0] - mu) * (h[0] - mu);
  for (Index t = 1; t < T; ++t) {
    const double e = h[t] - mu - phi * (h[t - 1] - mu);
    ss += e * e;
  }
  return scale + 0.5 * ss;
}

inline double sample_sigma2(const VectorXd& h, double mu, double phi, const SvHyper& pr,
                            RandomSource& rng) {
  const double shape = pr.shape + 0.5 * static_cast<double>(h.size());
  return rng.inverse_gamma(shape, sigma2_posterior_scale(h, mu, phi, pr.scale));
}

/// Normal conditional of μ: returns (mean, precision).
inline std::pair<double, double> mu_conditional(const VectorXd& h, double phi, double sigma2,
                                                const SvHyper& pr) {
  const Index T = h.size();
  const double K = 1.0 / pr.mu_var +
                   (1.0 - phi * phi + static_cast<double>(T - 1) * (1.0 - phi) * (1.0 - phi)) / sigma2;
  double acc = (1.0 - phi * phi) * h[0];
  for (Index t = 1; t < T; ++t) acc += (1.0 - phi) * (h[t] - phi * h[t - 1]);
  const double mean = (pr.mu_mean / pr.mu_var + acc / sigma2) / K;
  return {mean, K};
}

inline double sample_mu(const VectorXd& h, double phi, double sigma2, const SvHyper& pr,
                        RandomSource& rng) {
  const auto [m, K] = mu_conditional(h, phi, sigma2, pr);
  return m + rng.normal() / std::sqrt(K);
}

/// Gaussian part of the φ conditional (prior plus transitions t >= 2).
inline std::pair<double, double> phi_proposal(const VectorXd& h, double mu, double sigma2,
                                              const SvHyper& pr) {
  const Index T = h.size();
  double sxx = 0.0, sxy = 0.0;
  for (Index t = 1; t < T; ++t) {
    const double a = h[t - 1] - mu;
    sxx += a * a;
    sxy += a * (h[t] - mu);
  }
  const double K = 1.0 / pr.phi_var + sxx / sigma2;
  return {(pr.phi_mean / pr.phi_var + sxy / sigma2) / K, K};
}

/// Log of the initial-condition factor omitted from the proposal.
inline double phi_log_initial_factor(double phi, double h1, double mu, double sigma2) {
  const double c = 1.0 - phi * phi;
  return 0.5 * std::log(c) - 0.5 * c * (h1 - mu) * (h1 - mu) / sigma2;
}

struct PhiStep {
  double value;
  bool accepted;
};

/// Independence Metropolis-Hastings update of φ.
inline PhiStep sample_phi(const VectorXd& h, double mu, double sigma2, double phi_current,
                          const SvHyper& pr, RandomSource& rng) {
  const auto [m, K] = phi_proposal(h, mu, sigma2, pr);
  const double prop = truncated_normal(m, 1.0 / std::sqrt(K), -1.0, 1.0, rng);
  if (!(std::abs(prop) < 1.0)) return {phi_current, false};
  const double log_ratio = phi_log_initial_factor(prop, h[0], mu, sigma2) -
                           phi_log_initial_factor(phi_current, h[0], mu, sigma2);
  if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) return {prop, true};
  return {phi_current, false};
}

// ---------------------------------------------------------------------------
// Full sampler

struct McmcSettings {
  Index burn_in = 1000;
  Index draws = 1000;
  Index thin = 1;
  std::uint64_t seed = 1;
  bool store_states = true;
  // Skip the identification check; loadings are then only reduced-form.
  bool reduced_form = false;
};

struct McmcChain {
  McmcSettings settings;
  Index n = 0, p = 0, r = 0, T = 0;
  std::vector<ParamDraw> draws;
  std::vector<LatentStates> states;
  VectorXd phi_acceptance;     // per series, over all sweeps
  Index inexact_loading_draws = 0;  // truncated-normal fallback count

  ParamDraw posterior_mean() const {
    if (draws.empty()) throw InsufficientDraws("empty chain");
    ParamDraw m = draws.front();
    for (std::size_t s = 1; s < draws.size(); ++s) {
      m.coef += draws[s].coef;
      m.L += draws[s].L;
      m.mu += draws[s].mu;
      m.phi += draws[s].phi;
      m.sigma2 += draws[s].sigma2;
    }
    const double c = 1.0 / static_cast<double>(draws.size());
    m.coef *= c;
    m.L *= c;
    m.mu *= c;
    m.phi *= c;
    m.sigma2 *= c;
    return m;
  }

  MatrixXd posterior_mean_h() const {
    if (states.empty()) throw InsufficientDraws("chain stored no states");
    MatrixXd acc = MatrixXd::Zero(states.front().h.rows(), states.front().h.cols());
    for (const auto& s : states) acc += s.h;
    return acc / static_cast<double>(states.size());
  }
};

/// Starting point inside every support constraint.
inline std::pair<ParamDraw, LatentStates> initial_state(const ModelSpec& spec, Index T,
                                                        RandomSource& rng) {
  const Index n = spec.n, r = spec.r;
  ParamDraw d;
  d.coef = spec.prior.beta_mean;
  d.L = MatrixXd::Zero(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) {
      switch (spec.signs(i, j)) {
        case Sign::pos: d.L(i, j) = 0.1; break;
        case Sign::neg: d.L(i, j) = -0.1; break;
        case Sign::zero: d.L(i, j) = 0.0; break;
        default: d.L(i, j) = rng.uniform() < 0.5 ? -0.1 : 0.1;
      }
    }
  d.mu = spec.prior.mu_mean;
  d.phi = VectorXd::Constant(n + r, 0.95);
  d.sigma2 = VectorXd::Constant(n + r, 0.01);
  LatentStates s;
  s.h = MatrixXd::Zero(T, n + r);
  for (Index i = 0; i < n; ++i) s.h.col(i).setConstant(d.mu[i]);
  s.f = MatrixXd::Zero(T, r);
  return {std::move(d), std::move(s)};
}

/// One full sweep in place. Returns per-series φ acceptance flags.
inline std::vector<bool> gibbs_sweep(const VarData& data, const ModelSpec& spec, ParamDraw& d,
                                     LatentStates& s, RandomSource& rng, Index* inexact = nullptr) {
  const Index n = spec.n, r = spec.r, T = data.T();
  const PriorSpec& pr = spec.prior;

  // factors
  MatrixXd resid = var_residuals(data, d.coef);
  s.f = sample_factors(resid, d.L, s.h, rng);

  // coefficients and loadings
  for (Index i = 0; i < n; ++i) {
    const VectorXd cur = d.L.row(i).transpose();
    auto bl = sample_beta_loadings(data.Y.col(i), data.X, s.f, s.h.col(i), equation_prior(pr, i),
                                   spec.signs, i, rng, &cur);
    d.coef.col(i) = bl.beta;
    d.L.row(i) = bl.loading.transpose();
    if (!bl.exact && inexact) ++*inexact;
  }

  // log-volatilities
  resid = var_residuals(data, d.coef);
  if (r > 0) resid -= s.f * d.L.transpose();
  for (Index i = 0; i < n + r; ++i) {
    const VectorXd z = i < n ? VectorXd(resid.col(i)) : VectorXd(s.f.col(i - n));
    const double mu = i < n ? d.mu[i] : 0.0;
    s.h.col(i) = sample_volatility_path(z, s.h.col(i), mu, d.phi[i], d.sigma2[i], rng);
  }

  // σ², μ, φ
  std::vector<bool> accepted(static_cast<std::size_t>(n + r), false);
  for (Index i = 0; i < n + r; ++i) {
    const VectorXd hi = s.h.col(i);
    const SvHyper hp = sv_hyper(pr, i);
    const double mu = i < n ? d.mu[i] : 0.0;
    d.sigma2[i] = sample_sigma2(hi, mu, d.phi[i], hp, rng);
  }
  for (Index i = 0; i < n; ++i)
    d.mu[i] = sample_mu(s.h.col(i), d.phi[i], d.sigma2[i], sv_hyper(pr, i), rng);
  for (Index i = 0; i < n + r; ++i) {
    const double mu = i < n ? d.mu[i] : 0.0;
    const auto st = sample_phi(s.h.col(i), mu, d.sigma2[i], d.phi[i], sv_hyper(pr, i), rng);
    d.phi[i] = st.value;
    accepted[static_cast<std::size_t>(i)] = st.accepted;
  }
  (void)T;
  return accepted;
}

inline McmcChain run_chain(const VarData& data, const ModelSpec& spec, const McmcSettings& settings) {
  if (settings.draws < 1) throw ConfigError("draws must be >= 1");
  if (settings.thin < 1) throw ConfigError("thin must be >= 1");
  if (settings.burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (data.n() != spec.n || data.p != spec.p) throw DimensionMismatch("data vs model spec");
  const auto rep = validate_model_spec(spec, data.T() + spec.p);
  if (!rep.ok) throw ConfigError(rep.messages.front());
  if (!settings.reduced_form) {
    const auto id = validate_point_identification(spec.signs);
    if (!id.ok) throw ConfigError("sign restrictions do not point-identify the factors: " + id.messages.front());
  }
  RandomSource rng(settings.seed);
  auto [d, s] = initial_state(spec, data.T(), rng);
  McmcChain chain;
  chain.settings = settings;
  chain.n = spec.n;
  chain.p = spec.p;
  chain.r = spec.r;
  chain.T = data.T();
  chain.phi_acceptance = VectorXd::Zero(spec.m());
  chain.draws.reserve(static_cast<std::size_t>(settings.draws));
  const Index total = settings.burn_in + settings.draws * settings.thin;
  for (Index sweep = 0; sweep < total; ++sweep) {
    std::vector<bool> acc;
    try {
      acc = gibbs_sweep(data, spec, d, s, rng, &chain.inexact_loading_draws);
    } catch (const NumericalError& e) {
      throw NumericalError("sweep " + std::to_string(sweep) + ": " + e.what());
    }
    for (Index i = 0; i < spec.m(); ++i)
      if (acc[static_cast<std::size_t>(i)]) chain.phi_acceptance[i] += 1.0;
    const Index kept = sweep - settings.burn_in;
    if (kept >= 0 && (kept + 1) % settings.thin == 0) {
      chain.draws.push_back(d);
      if (settings.store_states) chain.states.push_back(s);
    }
  }
  chain.phi_acceptance /= static_cast<double>(total);
  return chain;
}

}  // namespace fsvar
