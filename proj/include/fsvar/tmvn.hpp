#pragma once

// Multivariate normal restricted to a box, drawn by exponentially tilted
// accept-reject with a saddle-point tilting parameter. When the proposal
// keeps getting rejected we switch to coordinate-wise Gibbs inside the box,
// started from a feasible point, which still leaves the target invariant.

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "fsvar/error.hpp"
#include "fsvar/random.hpp"
#include "fsvar/stats.hpp"

namespace fsvar {

struct TmvnDraw {
  Eigen::VectorXd value;
  bool exact = true;   // false when the Gibbs fallback produced the draw
  int proposals = 0;
};

struct TmvnOptions {
  int max_proposals = 100;
  int fallback_sweeps = 10;
};

namespace detail {

// Tilting problem in standardized coordinates: unit-diagonal lower factor
// minus the identity, bounds divided by the Cholesky diagonal.
struct TiltProblem {
  Eigen::MatrixXd strict;  // strictly lower part of the scaled factor
  Eigen::VectorXd lo, hi;
  Eigen::Index d = 0;

  void shifted(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, Eigen::VectorXd& lt,
               Eigen::VectorXd& ut) const {
    const Eigen::VectorXd c = strict * x;
    lt = lo - mu - c;
    ut = hi - mu - c;
  }

  double psi(const Eigen::VectorXd& x, const Eigen::VectorXd& mu) const {
    Eigen::VectorXd lt, ut;
    shifted(x, mu, lt, ut);
    double p = 0.0;
    for (Eigen::Index k = 0; k < d; ++k)
      p += stats::log_normal_interval(lt[k], ut[k]) + 0.5 * mu[k] * mu[k] - x[k] * mu[k];
    return p;
  }

  // Unknowns: x_0..x_{d-2}, mu_0..mu_{d-2}; the last of each is pinned to 0.
  void gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad, Eigen::MatrixXd* jac) const {
    const Eigen::Index m = d - 1;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d), mu = Eigen::VectorXd::Zero(d);
    x.head(m) = y.head(m);
    mu.head(m) = y.tail(m);
    Eigen::VectorXd lt, ut;
    shifted(x, mu, lt, ut);
    Eigen::VectorXd pl(d), pu(d), P(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double w = stats::log_normal_interval(lt[k], ut[k]);
      const double inv = 1.0 / std::sqrt(2.0 * M_PI);
      pl[k] = std::isfinite(lt[k]) ? std::exp(-0.5 * lt[k] * lt[k] - w) * inv : 0.0;
      pu[k] = std::isfinite(ut[k]) ? std::exp(-0.5 * ut[k] * ut[k] - w) * inv : 0.0;
      P[k] = pl[k] - pu[k];
    }
    grad.resize(2 * m);
    grad.head(m) = -mu.head(m) + (strict.transpose() * P).head(m);
    grad.tail(m) = (mu - x + P).head(m);
    if (!jac) return;
    Eigen::VectorXd dP(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double a = std::isfinite(lt[k]) ? lt[k] : 0.0;
      const double b = std::isfinite(ut[k]) ? ut[k] : 0.0;
      dP[k] = -P[k] * P[k] + a * pl[k] - b * pu[k];
    }
    const Eigen::MatrixXd DL = dP.asDiagonal() * strict;
    const Eigen::MatrixXd mx = -Eigen::MatrixXd::Identity(d, d) + DL;
    const Eigen::MatrixXd xx = strict.transpose() * DL;
    jac->resize(2 * m, 2 * m);
    jac->topLeftCorner(m, m) = xx.topLeftCorner(m, m);
    jac->topRightCorner(m, m) = mx.topLeftCorner(m, m).transpose();
    jac->bottomLeftCorner(m, m) = mx.topLeftCorner(m, m);
    jac->bottomRightCorner(m, m) = (1.0 + dP.head(m).array()).matrix().asDiagonal();
  }

  // Damped Newton on the gradient system; returns false if it stalls.
  bool solve(Eigen::VectorXd& y) const {
    const Eigen::Index m = d - 1;
    y = Eigen::VectorXd::Zero(2 * m);
    Eigen::VectorXd g;
    Eigen::MatrixXd J;
    gradient(y, g, &J);
    double norm = g.norm();
    for (int it = 0; it < 100; ++it) {
      if (!std::isfinite(norm)) return false;
      if (norm < 1e-10) return true;
      const Eigen::VectorXd step = J.colPivHouseholderQr().solve(-g);
      if (!step.allFinite()) return false;
      double t = 1.0;
      bool moved = false;
      for (int half = 0; half < 40; ++half, t *= 0.5) {
        Eigen::VectorXd trial = y + t * step, gt;
        gradient(trial, gt, nullptr);
        const double nt = gt.norm();
        if (std::isfinite(nt) && nt < (1.0 - 1e-4 * t) * norm) {
          y = trial;
          moved = true;
          break;
        }
      }
      if (!moved) return norm < 1e-6;
      gradient(y, g, &J);
      norm = g.norm();
    }
    return norm < 1e-6;
  }
};

}  // namespace detail

/// Draw from N(mean, cov) restricted to lo <= x <= hi (entries may be
/// infinite). `current`, if given, must be feasible and seeds the fallback.
inline TmvnDraw sample_truncated_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                     const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                     RandomSource& rng, const Eigen::VectorXd* current = nullptr,
                                     const TmvnOptions& opt = {}) {
  const Eigen::Index d = mean.size();
  if (cov.rows() != d || cov.cols() != d || lo.size() != d || hi.size() != d)
    throw DimensionMismatch("truncated normal dimensions");
  TmvnDraw out;
  if (d == 0) {
    out.value = mean;
    return out;
  }
  if (d == 1) {
    out.value.resize(1);
    out.value[0] = truncated_normal(mean[0], std::sqrt(cov(0, 0)), lo[0], hi[0], rng);
    out.proposals = 1;
    return out;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("truncated normal covariance");
  const Eigen::MatrixXd full = llt.matrixL();
  const Eigen::VectorXd diag = full.diagonal();

  detail::TiltProblem prob;
  prob.d = d;
  prob.lo = (lo - mean).cwiseQuotient(diag);
  prob.hi = (hi - mean).cwiseQuotient(diag);
  prob.strict = diag.cwiseInverse().asDiagonal() * full;
  prob.strict -= Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd y;
  if (prob.solve(y)) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d), mu = Eigen::VectorXd::Zero(d);
    x.head(d - 1) = y.head(d - 1);
    mu.head(d - 1) = y.tail(d - 1);
    const double psistar = prob.psi(x, mu);
    Eigen::VectorXd z(d);
    for (int attempt = 0; attempt < opt.max_proposals; ++attempt) {
      ++out.proposals;
      double logpr = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double col = prob.strict.row(k).head(k).dot(z.head(k));
        const double tl = prob.lo[k] - mu[k] - col;
        const double tu = prob.hi[k] - mu[k] - col;
        z[k] = mu[k] + truncated_standard_normal(tl, tu, rng);
        logpr += stats::log_normal_interval(tl, tu) + 0.5 * mu[k] * mu[k] - mu[k] * z[k];
      }
      if (rng.exponential() > psistar - logpr) {
        out.value = mean + full * z;
        // Guard against round-off pushing a coordinate onto the boundary.
        bool inside = true;
        for (Eigen::Index k = 0; k < d; ++k)
          if (!(out.value[k] >= lo[k] && out.value[k] <= hi[k])) inside = false;
        if (inside) return out;
      }
    }
  }

  // Coordinate-wise Gibbs inside the box.
  out.exact = false;
  Eigen::VectorXd x(d);
  if (current && current->size() == d) {
    x = *current;
  } else {
    x = mean;
  }
  for (Eigen::Index k = 0; k < d; ++k) {
    if (x[k] >= lo[k] && x[k] <= hi[k] && x[k] != 0.0) continue;
    if (std::isfinite(lo[k]) && std::isfinite(hi[k])) {
      x[k] = 0.5 * (lo[k] + hi[k]);
    } else if (std::isfinite(lo[k])) {
      x[k] = lo[k] + std::max(1.0, std::abs(lo[k])) * 1e-2 + std::sqrt(cov(k, k));
    } else if (std::isfinite(hi[k])) {
      x[k] = hi[k] - std::max(1.0, std::abs(hi[k])) * 1e-2 - std::sqrt(cov(k, k));
    }
  }
  for (Eigen::Index k = 0; k < d; ++k)
    if (!(x[k] >= lo[k] && x[k] <= hi[k]))
      throw TruncationFailure("no feasible starting point for truncated normal",
                              -stats::inf);
  const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(d, d));
  for (int sweep = 0; sweep < opt.fallback_sweeps; ++sweep) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double qkk = prec(k, k);
      double shift = 0.0;
      for (Eigen::Index j = 0; j < d; ++j)
        if (j != k) shift += prec(k, j) * (x[j] - mean[j]);
      const double m = mean[k] - shift / qkk;
      x[k] = truncated_normal(m, 1.0 / std::sqrt(qkk), lo[k], hi[k], rng);
    }
  }
  out.value = x;
  return out;
}

}  // namespace fsvar
