#pragma once

// Structural analysis per posterior draw: companion form, moving-average
// coefficients, impulse responses to one-standard-deviation factor shocks,
// forecast-error variance shares, and historical decompositions.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "fsvar/error.hpp"
#include "fsvar/model.hpp"

namespace fsvar {

struct CompanionForm {
  MatrixXd A;   // np×np
  VectorXd a0;  // np, intercept in the first block
  Index n = 0, p = 0;

  MatrixXd selector() const {
    MatrixXd J = MatrixXd::Zero(n, n * p);
    J.leftCols(n).setIdentity();
    return J;
  }

  double spectral_radius() const {
    Eigen::EigenSolver<MatrixXd> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
};

inline CompanionForm companion_form(const ParamDraw& d) {
  const Index n = d.n(), p = d.lags();
  CompanionForm c;
  c.n = n;
  c.p = p;
  c.A = MatrixXd::Zero(n * p, n * p);
  for (Index j = 1; j <= p; ++j) c.A.block(0, (j - 1) * n, n, n) = d.lag_matrix(j);
  if (p > 1) c.A.block(n, 0, n * (p - 1), n * (p - 1)).setIdentity();
  c.a0 = VectorXd::Zero(n * p);
  c.a0.head(n) = d.intercept();
  return c;
}

inline std::vector<MatrixXd> lag_matrices(const ParamDraw& d) {
  std::vector<MatrixXd> A;
  for (Index j = 1; j <= d.lags(); ++j) A.push_back(d.lag_matrix(j));
  return A;
}

struct VmaResult {
  std::vector<MatrixXd> phi;  // Φ_0 .. Φ_H
  bool nonstationary = false;  // spectral radius >= 1
};

/// Φ_0 = I, Φ_s = Σ_{j=1}^{min(s,p)} Φ_{s-j} A_j.
inline VmaResult vma_coefficients(const std::vector<MatrixXd>& A, Index H) {
  if (H < 0) throw ConfigError("horizon must be >= 0");
  if (A.empty()) throw DimensionMismatch("need at least one lag matrix");
  const Index n = A.front().rows(), p = static_cast<Index>(A.size());
  VmaResult out;
  out.phi.push_back(MatrixXd::Identity(n, n));
  for (Index s = 1; s <= H; ++s) {
    MatrixXd acc = MatrixXd::Zero(n, n);
    for (Index j = 1; j <= std::min(s, p); ++j)
      acc += out.phi[static_cast<std::size_t>(s - j)] * A[static_cast<std::size_t>(j - 1)];
    out.phi.push_back(std::move(acc));
  }
  CompanionForm c;
  c.n = n;
  c.p = p;
  c.A = MatrixXd::Zero(n * p, n * p);
  for (Index j = 0; j < p; ++j) c.A.block(0, j * n, n, n) = A[static_cast<std::size_t>(j)];
  if (p > 1) c.A.block(n, 0, n * (p - 1), n * (p - 1)).setIdentity();
  out.nonstationary = c.spectral_radius() >= 1.0;
  return out;
}

struct IrfResult {
  std::vector<MatrixXd> theta;  // horizon l → n×r responses
  Index reference_time = 0;     // 0-based row of the state matrix
};

/// Θ_l = Φ_l L diag(exp(h^f_t / 2)).
inline IrfResult impulse_responses(const ParamDraw& d, const MatrixXd& h, Index t, Index H) {
  const Index n = d.n(), r = d.r();
  if (t < 0 || t >= h.rows()) throw ConfigError("reference time outside the sample");
  const auto vma = vma_coefficients(lag_matrices(d), H);
  VectorXd sd(r);
  for (Index j = 0; j < r; ++j) sd[j] = std::exp(0.5 * h(t, n + j));
  const MatrixXd impact = d.L * sd.asDiagonal();
  IrfResult out;
  out.reference_time = t;
  for (const auto& P : vma.phi) out.theta.push_back(P * impact);
  return out;
}

struct FevdResult {
  // shares[l-1] is n×(r+1): factor shares then the idiosyncratic share, for
  // forecast horizon l = 1..H. within_factor[l-1] is n×r, each factor's share
  // of the common-component error alone.
  std::vector<MatrixXd> shares;
  std::vector<MatrixXd> within_factor;
};

/// Variance decomposition with volatilities held at their values at time t.
inline FevdResult fevd(const ParamDraw& d, const MatrixXd& h, Index t, Index H) {
  const Index n = d.n(), r = d.r();
  if (H < 1) throw ConfigError("variance decomposition needs horizon >= 1");
  if (t < 0 || t >= h.rows()) throw ConfigError("reference time outside the sample");
  const auto vma = vma_coefficients(lag_matrices(d), H - 1);
  const VectorXd vy = h.row(t).head(n).array().exp().transpose();
  VectorXd vf(r);
  for (Index j = 0; j < r; ++j) vf[j] = std::exp(h(t, n + j));
  MatrixXd cum = MatrixXd::Zero(n, r + 1);
  FevdResult out;
  for (Index l = 1; l <= H; ++l) {
    const MatrixXd& P = vma.phi[static_cast<std::size_t>(l - 1)];
    const MatrixXd PL = P * d.L;
    for (Index j = 0; j < r; ++j) cum.col(j) += PL.col(j).cwiseAbs2() * vf[j];
    cum.col(r) += P.cwiseAbs2() * vy;
    const VectorXd total = cum.rowwise().sum();
    MatrixXd share(n, r + 1), within(n, r);
    for (Index i = 0; i < n; ++i) {
      share.row(i) = cum.row(i) / total[i];
      const double common = cum.row(i).head(r).sum();
      for (Index j = 0; j < r; ++j) within(i, j) = common > 0.0 ? cum(i, j) / common : 0.0;
    }
    out.shares.push_back(std::move(share));
    out.within_factor.push_back(std::move(within));
  }
  return out;
}

/// Unconditional mean (I - Σ A_j)⁻¹ a0.
inline VectorXd var_mean(const ParamDraw& d) {
  const Index n = d.n();
  MatrixXd M = MatrixXd::Identity(n, n);
  for (Index j = 1; j <= d.lags(); ++j) M -= d.lag_matrix(j);
  Eigen::FullPivLU<MatrixXd> lu(M);
  if (!lu.isInvertible() || std::abs(lu.rcond()) < 1e-12)
    throw NonInvertibleMean("I - sum of lag matrices is singular");
  return lu.solve(d.intercept());
}

struct HdResult {
  std::vector<MatrixXd> factor;  // per factor, T×n contribution paths
  MatrixXd idiosyncratic;        // T×n
  MatrixXd demeaned;             // T×n, y_t - μ_y
  MatrixXd gap;                  // T×n, sum of contributions minus demeaned data
  VectorXd mean;                 // μ_y

  /// Contributions of variable i: T×(r+1), factors then idiosyncratic.
  MatrixXd variable(Index i) const {
    const Index T = idiosyncratic.rows(), r = static_cast<Index>(factor.size());
    MatrixXd out(T, r + 1);
    for (Index j = 0; j < r; ++j) out.col(j) = factor[static_cast<std::size_t>(j)].col(i);
    out.col(r) = idiosyncratic.col(i);
    return out;
  }
};

/// Historical decomposition over the estimation sample using in-sample
/// shocks only. Factor shocks are L_j f_{j,t}; the idiosyncratic shock is
/// the VAR residual net of factors.
inline HdResult historical_decomposition(const ParamDraw& d, const MatrixXd& f, const VarData& data) {
  const Index n = d.n(), r = d.r(), T = data.T(), p = d.lags();
  if (f.rows() != T || f.cols() != r) throw DimensionMismatch("factor paths vs data");
  HdResult out;
  out.mean = var_mean(d);
  const MatrixXd eps = var_residuals(data, d.coef);
  const MatrixXd common = r > 0 ? MatrixXd(f * d.L.transpose()) : MatrixXd::Zero(T, n);
  const auto A = lag_matrices(d);
  auto propagate = [&](const MatrixXd& shocks) {
    MatrixXd c = MatrixXd::Zero(T, n);
    for (Index t = 0; t < T; ++t) {
      VectorXd v = shocks.row(t).transpose();
      for (Index j = 1; j <= std::min(t, p); ++j)
        v += A[static_cast<std::size_t>(j - 1)] * c.row(t - j).transpose();
      c.row(t) = v.transpose();
    }
    return c;
  };
  for (Index j = 0; j < r; ++j) out.factor.push_back(propagate(f.col(j) * d.L.col(j).transpose()));
  out.idiosyncratic = propagate(eps - common);
  out.demeaned = data.Y.rowwise() - out.mean.transpose();
  MatrixXd total = out.idiosyncratic;
  for (const auto& c : out.factor) total += c;
  out.gap = total - out.demeaned;
  return out;
}

/// Pointwise empirical quantile with linear interpolation.
inline double empirical_quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InsufficientDraws("no values for quantile");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

}  // namespace fsvar
