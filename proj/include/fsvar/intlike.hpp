#pragma once

// Likelihood with the log-volatilities integrated out by importance
// sampling. The importance density is Gaussian, centred at the conditional
// mode of the stacked log-volatilities (found by EM), with a banded
// precision taken from the EM or the exact Hessian.
//
// Stacked layout: element t*m + i of a stacked vector is series i at time t,
// with m = n + r and the n idiosyncratic series first.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsvar/bandlin.hpp"
#include "fsvar/error.hpp"
#include "fsvar/model.hpp"
#include "fsvar/random.hpp"
#include "fsvar/stats.hpp"

namespace fsvar {

inline VectorXd stack_states(const MatrixXd& h) {
  const Index T = h.rows(), m = h.cols();
  VectorXd v(T * m);
  for (Index t = 0; t < T; ++t) v.segment(t * m, m) = h.row(t).transpose();
  return v;
}

inline MatrixXd unstack_states(const VectorXd& v, Index m) {
  const Index T = v.size() / m;
  MatrixXd h(T, m);
  for (Index t = 0; t < T; ++t) h.row(t) = v.segment(t * m, m).transpose();
  return h;
}

/// Stacked prior mean: idiosyncratic means then zeros, repeated T times.
inline VectorXd stacked_state_mean(const VectorXd& mu, Index m, Index T) {
  VectorXd one = VectorXd::Zero(m);
  one.head(mu.size()) = mu;
  return one.replicate(T, 1);
}

inline void check_stationary(const VectorXd& phi) {
  for (Index i = 0; i < phi.size(); ++i)
    if (!(std::abs(phi[i]) < 1.0))
      throw NonStationary("AR coefficient of series " + std::to_string(i) + " is not inside (-1, 1)");
}

/// Precision of the stacked log-volatilities under the AR(1) state
/// equations with stationary initial conditions. Bandwidth m.
inline BandSymMatrix state_precision(const VectorXd& phi, const VectorXd& sigma2, Index T) {
  const Index m = phi.size();
  check_stationary(phi);
  BandSymMatrix P(T * m, m);
  for (Index i = 0; i < m; ++i) {
    const double s = sigma2[i], f = phi[i];
    if (!(s > 0.0)) throw NonPositiveScale("state variance must be positive");
    for (Index t = 0; t < T; ++t) {
      double d;
      if (T == 1) d = (1.0 - f * f) / s;
      else if (t == 0 || t == T - 1) d = 1.0 / s;
      else d = (1.0 + f * f) / s;
      P.ref(t * m + i, t * m + i) = d;
      if (t + 1 < T) P.ref((t + 1) * m + i, t * m + i) = -f / s;
    }
  }
  return P;
}

/// log p(h | μ, φ, σ²) for a T×m state matrix.
inline double log_state_prior(const MatrixXd& h, const VectorXd& mu, const VectorXd& phi,
                              const VectorXd& sigma2) {
  const Index T = h.rows(), m = h.cols();
  if (phi.size() != m || sigma2.size() != m || mu.size() > m)
    throw DimensionMismatch("state prior parameters");
  const BandSymMatrix P = state_precision(phi, sigma2, T);
  const VectorXd d = stack_states(h) - stacked_state_mean(mu, m, T);
  double logdet = 0.0;
  for (Index i = 0; i < m; ++i)
    logdet += -static_cast<double>(T) * std::log(sigma2[i]) + std::log1p(-phi[i] * phi[i]);
  return -0.5 * static_cast<double>(T * m) * stats::log_2pi + 0.5 * logdet - 0.5 * P.quadratic_form(d);
}

/// log p(y | β, L, h) with the factors integrated out, from the residual
/// matrix E = Y - XB.
inline double log_cond_likelihood(const MatrixXd& resid, const MatrixXd& L, const MatrixXd& h) {
  const Index T = resid.rows(), n = resid.cols(), r = L.cols();
  if (L.rows() != n || h.rows() != T || h.cols() != n + r)
    throw DimensionMismatch("conditional likelihood inputs");
  double total = -0.5 * static_cast<double>(T * n) * stats::log_2pi;
  const bool woodbury = 2 * r < n;
  for (Index t = 0; t < T; ++t) {
    const VectorXd e = resid.row(t).transpose();
    const VectorXd hy = h.row(t).head(n).transpose();
    const VectorXd wy = (-hy).array().exp();
    if (r == 0) {
      total += -0.5 * hy.sum() - 0.5 * e.cwiseAbs2().dot(wy);
      continue;
    }
    const VectorXd hf = h.row(t).tail(r).transpose();
    if (woodbury) {
      MatrixXd K = L.transpose() * wy.asDiagonal() * L;
      K.diagonal() += (-hf).array().exp().matrix();
      Eigen::LLT<MatrixXd> llt(K);
      if (llt.info() != Eigen::Success) throw NotPositiveDefinite("factor posterior precision");
      const VectorXd b = L.transpose() * wy.cwiseProduct(e);
      const double logdetK = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
      total += -0.5 * (hy.sum() + hf.sum() + logdetK) -
               0.5 * (e.cwiseAbs2().dot(wy) - b.dot(llt.solve(b)));
    } else {
      MatrixXd C = L * hf.array().exp().matrix().asDiagonal() * L.transpose();
      C.diagonal() += hy.array().exp().matrix();
      Eigen::LLT<MatrixXd> llt(C);
      if (llt.info() != Eigen::Success) throw NotPositiveDefinite("observation covariance");
      const double logdet = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
      total += -0.5 * logdet - 0.5 * e.dot(llt.solve(e));
    }
  }
  return total;
}

inline double log_joint_target(const MatrixXd& resid, const ParamDraw& th, const MatrixXd& h) {
  return log_cond_likelihood(resid, th.L, h) + log_state_prior(h, th.mu, th.phi, th.sigma2);
}

// ---------------------------------------------------------------------------
// EM for the conditional mode

/// Expected squared residuals given the current states: for each t, the
/// idiosyncratic part uses (ε - L f̂)² + diag(L K⁻¹ L'), the factor part
/// f̂² + diag(K⁻¹).
inline MatrixXd expected_squares(const MatrixXd& resid, const MatrixXd& L, const MatrixXd& h) {
  const Index T = resid.rows(), n = resid.cols(), r = L.cols();
  MatrixXd z(T, n + r);
  for (Index t = 0; t < T; ++t) {
    const VectorXd e = resid.row(t).transpose();
    if (r == 0) {
      z.row(t) = e.cwiseAbs2().transpose();
      continue;
    }
    const VectorXd wy = (-h.row(t).head(n)).array().exp().transpose();
    MatrixXd K = L.transpose() * wy.asDiagonal() * L;
    K.diagonal() += (-h.row(t).tail(r)).array().exp().matrix().transpose();
    Eigen::LLT<MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("E-step factor precision");
    const MatrixXd Kinv = llt.solve(MatrixXd::Identity(r, r));
    const VectorXd fhat = Kinv * (L.transpose() * wy.cwiseProduct(e));
    const VectorXd u = e - L * fhat;
    const MatrixXd LK = L * Kinv;
    for (Index i = 0; i < n; ++i) z(t, i) = u[i] * u[i] + LK.row(i).dot(L.row(i));
    for (Index j = 0; j < r; ++j) z(t, n + j) = fhat[j] * fhat[j] + Kinv(j, j);
  }
  return z;
}

/// The EM surrogate in stacked form, for fixed expected squares zhat.
struct QFunction {
  BandSymMatrix P;
  VectorXd mean;  // stacked prior mean
  VectorXd zhat;  // stacked expected squares

  double value(const VectorXd& h) const {
    const VectorXd d = h - mean;
    return -0.5 * P.quadratic_form(d) - 0.5 * h.sum() -
           0.5 * zhat.dot((-h).array().exp().matrix());
  }
  VectorXd gradient(const VectorXd& h) const {
    const VectorXd w = (-h).array().exp().matrix().cwiseProduct(zhat);
    return -P.multiply(h - mean) - 0.5 * (VectorXd::Ones(h.size()) - w);
  }
  /// Negative Hessian, -H_Q = P + ½ diag(e^{-h} ⊙ zhat).
  BandSymMatrix neg_hessian(const VectorXd& h) const {
    BandSymMatrix K = P;
    for (Index k = 0; k < h.size(); ++k) K.add(k, k, 0.5 * std::exp(-h[k]) * zhat[k]);
    return K;
  }
};

inline QFunction make_q_function(const MatrixXd& resid, const ParamDraw& th, const MatrixXd& h0) {
  const Index T = resid.rows(), m = th.phi.size();
  return {state_precision(th.phi, th.sigma2, T), stacked_state_mean(th.mu, m, T),
          stack_states(expected_squares(resid, th.L, h0))};
}

struct EmOptions {
  double newton_tol = 1e-4;  // ε1
  double em_tol = 1e-4;      // ε2
  int max_em = 100;
  int max_newton = 50;
  bool strict = false;       // throw on hitting the EM cap
};

struct EmResult {
  MatrixXd h;                   // T×m mode
  int iterations = 0;
  bool converged = false;
  std::vector<double> q_start;  // Q(h_{j-1} | h_{j-1})
  std::vector<double> q_end;    // Q(h_j | h_{j-1})
};

/// Newton maximization of Q with step halving.
inline VectorXd maximize_q(const QFunction& q, VectorXd h, const EmOptions& opt) {
  double qv = q.value(h);
  for (int it = 0; it < opt.max_newton; ++it) {
    const BandCholeskyFactor G = band_cholesky(q.neg_hessian(h));
    const VectorXd step = band_solve(G, q.gradient(h));
    double t = 1.0;
    VectorXd next = h + step;
    double qn = q.value(next);
    for (int half = 0; half < 30 && !(qn >= qv); ++half) {
      t *= 0.5;
      next = h + t * step;
      qn = q.value(next);
    }
    if (!(qn >= qv)) break;  // no ascent possible from here
    h = next;
    qv = qn;
    if ((t * step).norm() < opt.newton_tol) break;
  }
  return h;
}

inline EmResult em_mode(const MatrixXd& resid, const ParamDraw& th, const MatrixXd& h0,
                        const EmOptions& opt = {}) {
  const Index m = th.phi.size();
  if (h0.cols() != m || h0.rows() != resid.rows()) throw DimensionMismatch("EM starting states");
  EmResult out;
  VectorXd h = stack_states(h0);
  for (int it = 0; it < opt.max_em; ++it) {
    const QFunction q = make_q_function(resid, th, unstack_states(h, m));
    out.q_start.push_back(q.value(h));
    const VectorXd next = maximize_q(q, h, opt);
    out.q_end.push_back(q.value(next));
    const double change = (next - h).norm();
    h = next;
    out.iterations = it + 1;
    if (change < opt.em_tol) {
      out.converged = true;
      break;
    }
  }
  out.h = unstack_states(h, m);
  if (!out.converged && opt.strict)
    throw MaxIterationsExceeded("EM did not converge in " + std::to_string(opt.max_em) + " sweeps");
  return out;
}

// ---------------------------------------------------------------------------
// Hessians at the mode (returned as negative Hessians, i.e. precisions)

/// EM route: -(H_Q + H_H), with H_H = -½ Z' ⊙ (I - Z) per period,
/// Z_t = diag(e^{-h_t}) W K_t⁻¹ W', W = (L; I_r).
inline BandSymMatrix hessian_em(const MatrixXd& hhat, const ParamDraw& th, const MatrixXd& resid) {
  const Index T = resid.rows(), n = resid.cols(), r = th.L.cols(), m = n + r;
  const QFunction q = make_q_function(resid, th, hhat);
  BandSymMatrix K = q.neg_hessian(stack_states(hhat));
  if (r == 0) return K;
  MatrixXd W(m, r);
  W.topRows(n) = th.L;
  W.bottomRows(r) = MatrixXd::Identity(r, r);
  for (Index t = 0; t < T; ++t) {
    const VectorXd wy = (-hhat.row(t).head(n)).array().exp().transpose();
    MatrixXd Kt = th.L.transpose() * wy.asDiagonal() * th.L;
    Kt.diagonal() += (-hhat.row(t).tail(r)).array().exp().matrix().transpose();
    Eigen::LLT<MatrixXd> llt(Kt);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("factor precision at mode");
    const VectorXd einv = (-hhat.row(t)).array().exp().transpose();
    const MatrixXd Z = einv.asDiagonal() * (W * llt.solve(W.transpose()));
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b <= a; ++b) {
        const double v = (a == b ? Z(a, a) : 0.0) - Z(b, a) * Z(a, b);
        K.add(t * m + a, t * m + b, 0.5 * v);
      }
  }
  return K;
}

/// Exact route: minus the Hessian of log p(y|h) + log p(h).
inline BandSymMatrix hessian_direct(const MatrixXd& hhat, const ParamDraw& th, const MatrixXd& resid) {
  const Index T = resid.rows(), n = resid.cols(), r = th.L.cols(), m = n + r;
  BandSymMatrix K = state_precision(th.phi, th.sigma2, T);
  MatrixXd Wt(m, n);  // (I_n; L')
  Wt.topRows(n) = MatrixXd::Identity(n, n);
  if (r > 0) Wt.bottomRows(r) = th.L.transpose();
  for (Index t = 0; t < T; ++t) {
    const VectorXd eh = hhat.row(t).array().exp().transpose();
    const MatrixXd G = Wt.transpose() * eh.asDiagonal() * Wt;
    Eigen::LLT<MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("observation covariance");
    const VectorXd e = resid.row(t).transpose();
    const VectorXd a = llt.solve(e);
    const MatrixXd Zt = eh.asDiagonal() * (Wt * llt.solve(Wt.transpose()));
    const VectorXd v = Wt * a;
    const MatrixXd Zb = eh.asDiagonal() * (v * v.transpose());
    for (Index k = 0; k < m; ++k)
      for (Index l = 0; l <= k; ++l) {
        const double d = k == l ? 1.0 : 0.0;
        const double t1 = -0.5 * Zt(l, k) * (d - Zt(k, l));
        const double t2 = 0.5 * Zb(l, k) * (d - 2.0 * Zt(k, l));
        K.add(t * m + k, t * m + l, -(t1 + t2));
      }
  }
  return K;
}

// ---------------------------------------------------------------------------
// Importance-sampling estimator

enum class HessianRoute { em, direct };

struct IntegratedLikelihoodOptions {
  EmOptions em;
  HessianRoute route = HessianRoute::em;
  const MatrixXd* warm_start = nullptr;  // optional T×m starting states
  bool throw_on_degenerate = true;
};

struct IntegratedLikelihoodResult {
  double log_estimate = -stats::inf;
  double standard_error = stats::inf;  // of the log estimate
  double ess = 0.0;
  int draws = 0;
  bool em_converged = false;
  int em_iterations = 0;
  bool hessian_fallback = false;  // used -H_Q because the full Hessian failed
  MatrixXd mode;
};

/// Gaussian importance density for the stacked states.
struct StateProposal {
  GaussianInPrecisionForm density;
  EmResult em;
  bool fallback = false;
};

inline StateProposal build_state_proposal(const MatrixXd& resid, const ParamDraw& th,
                                          const IntegratedLikelihoodOptions& opt) {
  const Index T = resid.rows(), m = th.phi.size();
  check_stationary(th.phi);
  MatrixXd h0 = opt.warm_start ? *opt.warm_start : unstack_states(stacked_state_mean(th.mu, m, T), m);
  EmResult em = em_mode(resid, th, h0, opt.em);
  const VectorXd mode = stack_states(em.h);
  bool fallback = false;
  BandSymMatrix K = opt.route == HessianRoute::em ? hessian_em(em.h, th, resid)
                                                  : hessian_direct(em.h, th, resid);
  try {
    GaussianInPrecisionForm g(mode, K);
    return {std::move(g), std::move(em), false};
  } catch (const NotPositiveDefinite&) {
    fallback = true;
  }
  const QFunction q = make_q_function(resid, th, em.h);
  GaussianInPrecisionForm g(mode, q.neg_hessian(mode));
  return {std::move(g), std::move(em), fallback};
}

inline IntegratedLikelihoodResult integrated_likelihood(const MatrixXd& resid, const ParamDraw& th,
                                                        int R1, RandomSource& rng,
                                                        const IntegratedLikelihoodOptions& opt = {}) {
  if (R1 < 2) throw ConfigError("need at least two importance draws");
  const Index m = th.phi.size();
  const StateProposal prop = build_state_proposal(resid, th, opt);
  std::vector<double> lw(static_cast<std::size_t>(R1));
  for (int s = 0; s < R1; ++s) {
    const VectorXd z = rng.normal_vector(prop.density.dim());
    const VectorXd hv = prop.density.mean() + prop.density.factor().solve_upper(z);
    const double log_g = -0.5 * (static_cast<double>(hv.size()) * stats::log_2pi -
                                 prop.density.factor().log_determinant() + z.squaredNorm());
    lw[static_cast<std::size_t>(s)] = log_joint_target(resid, th, unstack_states(hv, m)) - log_g;
  }
  const auto sum = stats::summarize_log_weights(lw);
  IntegratedLikelihoodResult out;
  out.log_estimate = sum.log_mean;
  out.standard_error = sum.log_standard_error;
  out.ess = sum.ess;
  out.draws = R1;
  out.em_converged = prop.em.converged;
  out.em_iterations = prop.em.iterations;
  out.hessian_fallback = prop.fallback;
  out.mode = prop.em.h;
  if (opt.throw_on_degenerate && !(sum.ess >= 2.0)) throw DegenerateWeights("integrated likelihood weights degenerate", sum.ess);
  return out;
}

/// Convenience overload from data and parameters.
inline IntegratedLikelihoodResult integrated_likelihood(const VarData& data, const ParamDraw& th,
                                                        int R1, RandomSource& rng,
                                                        const IntegratedLikelihoodOptions& opt = {}) {
  return integrated_likelihood(var_residuals(data, th.coef), th, R1, rng, opt);
}

}  // namespace fsvar
