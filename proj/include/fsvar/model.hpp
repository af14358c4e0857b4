#pragma once

// Model types: dimensions, priors, sign restrictions, parameter and state
// containers, the regression design, and the variable-reordering map.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fsvar/error.hpp"

namespace fsvar {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Sign { pos, neg, zero, free };

/// n×r grid of loading restrictions.
class SignMatrix {
 public:
  SignMatrix() = default;
  SignMatrix(Index n, Index r, Sign fill = Sign::free)
      : n_(n), r_(r), cells_(static_cast<std::size_t>(n * r), fill) {}

  static SignMatrix unrestricted(Index n, Index r) { return SignMatrix(n, r, Sign::free); }

  Index rows() const { return n_; }
  Index cols() const { return r_; }
  Sign operator()(Index i, Index j) const { return cells_[static_cast<std::size_t>(i * r_ + j)]; }
  Sign& operator()(Index i, Index j) { return cells_[static_cast<std::size_t>(i * r_ + j)]; }

  bool any_restriction() const {
    return std::any_of(cells_.begin(), cells_.end(), [](Sign s) { return s != Sign::free; });
  }

  /// Admissible interval for loading (i, j); zero entries give [0, 0].
  std::pair<double, double> bounds(Index i, Index j) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch ((*this)(i, j)) {
      case Sign::pos: return {0.0, inf};
      case Sign::neg: return {-inf, 0.0};
      case Sign::zero: return {0.0, 0.0};
      default: return {-inf, inf};
    }
  }

  bool satisfied_by(const MatrixXd& L) const {
    if (L.rows() != n_ || L.cols() != r_) return false;
    for (Index i = 0; i < n_; ++i)
      for (Index j = 0; j < r_; ++j) {
        const double v = L(i, j);
        switch ((*this)(i, j)) {
          case Sign::pos: if (!(v > 0.0)) return false; break;
          case Sign::neg: if (!(v < 0.0)) return false; break;
          case Sign::zero: if (v != 0.0) return false; break;
          default: if (!std::isfinite(v)) return false;
        }
      }
    return true;
  }

  SignMatrix permuted_rows(const std::vector<Index>& order) const {
    SignMatrix out(n_, r_);
    for (Index i = 0; i < n_; ++i)
      for (Index j = 0; j < r_; ++j) out(i, j) = (*this)(order[static_cast<std::size_t>(i)], j);
    return out;
  }

  bool operator==(const SignMatrix&) const = default;

 private:
  Index n_ = 0;
  Index r_ = 0;
  std::vector<Sign> cells_;
};

/// Hyperparameters. Coefficient and loading priors are independent normals
/// with diagonal covariance; SV blocks follow the usual conjugate shapes.
struct PriorSpec {
  MatrixXd beta_mean;      // k×n, column i is equation i
  MatrixXd beta_var;       // k×n
  MatrixXd loading_mean;   // n×r
  MatrixXd loading_var;    // n×r
  VectorXd mu_mean;        // n
  VectorXd mu_var;         // n
  VectorXd phi_mean;       // n+r
  VectorXd phi_var;        // n+r
  VectorXd sigma2_shape;   // n+r, inverse-gamma shape
  VectorXd sigma2_scale;   // n+r, inverse-gamma scale
};

struct ModelSpec {
  Index n = 0;
  Index p = 1;
  Index r = 0;
  PriorSpec prior;
  SignMatrix signs;

  Index k() const { return n * p + 1; }
  Index m() const { return n + r; }
};

/// One joint draw of the static parameters.
struct ParamDraw {
  MatrixXd coef;    // k×n, column i holds (a0_i, A_1[i,:], ..., A_p[i,:])
  MatrixXd L;       // n×r
  VectorXd mu;      // n
  VectorXd phi;     // n+r
  VectorXd sigma2;  // n+r

  Index n() const { return coef.cols(); }
  Index r() const { return L.cols(); }
  Index lags() const { return (coef.rows() - 1) / coef.cols(); }

  /// Stacked coefficients, equation by equation.
  VectorXd beta() const { return Eigen::Map<const VectorXd>(coef.data(), coef.size()); }

  VectorXd intercept() const { return coef.row(0).transpose(); }

  /// Lag-j coefficient matrix (1-based j): y_t gets A_j y_{t-j}.
  MatrixXd lag_matrix(Index j) const {
    const Index n_ = n();
    return coef.block(1 + (j - 1) * n_, 0, n_, n_).transpose();
  }

  /// Mean vector of the full state (idiosyncratic means, then zeros).
  VectorXd state_mean() const {
    VectorXd out = VectorXd::Zero(phi.size());
    out.head(mu.size()) = mu;
    return out;
  }
};

struct LatentStates {
  MatrixXd h;  // T×(n+r), idiosyncratic columns first
  MatrixXd f;  // T×r
};

/// Regression layout: row t of X is (1, y_{t-1}', ..., y_{t-p}').
struct VarData {
  MatrixXd Y;  // T×n
  MatrixXd X;  // T×k
  Index p = 1;
  Index T() const { return Y.rows(); }
  Index n() const { return Y.cols(); }
};

inline VarData make_var_data(const MatrixXd& raw, Index p) {
  if (p < 1) throw ConfigError("lag order must be at least 1");
  const Index total = raw.rows(), n = raw.cols();
  if (total <= p) throw DataError("need more than p observations");
  const Index T = total - p;
  VarData d;
  d.p = p;
  d.Y = raw.bottomRows(T);
  d.X.resize(T, n * p + 1);
  d.X.col(0).setOnes();
  for (Index j = 1; j <= p; ++j) d.X.block(0, 1 + (j - 1) * n, T, n) = raw.block(p - j, 0, T, n);
  return d;
}

/// Residuals y_t - x_t'B.
inline MatrixXd var_residuals(const VarData& d, const MatrixXd& coef) { return d.Y - d.X * coef; }

// ---------------------------------------------------------------------------
// Priors

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> messages;
  std::vector<std::pair<Index, Index>> column_pairs;
  double margin = 0.0;

  void fail(std::string msg) {
    ok = false;
    messages.push_back(std::move(msg));
  }
};

/// Residual variance of a univariate AR(p) with intercept, fitted by OLS.
inline VectorXd ar_residual_variances(const MatrixXd& raw, Index p) {
  const Index total = raw.rows(), n = raw.cols();
  if (total <= 2 * p + 1) throw DataError("too few observations for AR scale estimates");
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    const Index T = total - p;
    MatrixXd Z(T, p + 1);
    Z.col(0).setOnes();
    for (Index j = 1; j <= p; ++j) Z.col(j) = raw.col(i).segment(p - j, T);
    const VectorXd yv = raw.col(i).tail(T);
    const VectorXd b = Z.colPivHouseholderQr().solve(yv);
    const VectorXd e = yv - Z * b;
    out[i] = e.squaredNorm() / static_cast<double>(T - p - 1);
  }
  return out;
}

enum class DataKind { growth, level };

struct MinnesotaOptions {
  double own_shrinkage = 0.04;    // κ1
  double cross_shrinkage = 0.0016;  // κ2
  double intercept_scale = 100.0;
  DataKind kind = DataKind::growth;
};

/// Minnesota-style mean and diagonal variance for the VAR coefficients.
inline void build_minnesota_prior(Index n, Index p, const MinnesotaOptions& opt,
                                  const VectorXd& scale, MatrixXd& mean, MatrixXd& var) {
  if (!(opt.own_shrinkage > 0.0) || !(opt.cross_shrinkage > 0.0))
    throw ConfigError("shrinkage hyperparameters must be positive");
  if (scale.size() != n) throw DimensionMismatch("scale statistics length");
  for (Index j = 0; j < n; ++j)
    if (!(scale[j] > 0.0)) throw NonPositiveScale("non-positive scale for variable " + std::to_string(j));
  const Index k = n * p + 1;
  mean = MatrixXd::Zero(k, n);
  var.resize(k, n);
  for (Index i = 0; i < n; ++i) {
    var(0, i) = opt.intercept_scale * scale[i];
    for (Index l = 1; l <= p; ++l) {
      const double l2 = static_cast<double>(l * l);
      for (Index j = 0; j < n; ++j) {
        const Index row = 1 + (l - 1) * n + j;
        var(row, i) = i == j ? opt.own_shrinkage / l2
                             : opt.cross_shrinkage / l2 * scale[i] / scale[j];
      }
    }
    if (opt.kind == DataKind::level) mean(1 + i, i) = 1.0;
  }
}

struct SvPriorOptions {
  double mu_var = 10.0;
  double idio_share = 0.1;  // prior mean of exp(mu) as a share of the sample variance
  double phi_mean = 0.95;
  double phi_var = 1.0;
  double sigma2_shape = 5.0;
  double sigma2_scale = 0.04;
  double loading_var = 1.0;
};

/// Full prior from data: Minnesota coefficients, SV means from sample
/// variances, and defaults elsewhere.
inline PriorSpec default_prior(const MatrixXd& raw, Index p, Index r,
                               const MinnesotaOptions& mopt = {}, const SvPriorOptions& sopt = {}) {
  const Index n = raw.cols();
  PriorSpec pr;
  build_minnesota_prior(n, p, mopt, ar_residual_variances(raw, p), pr.beta_mean, pr.beta_var);
  pr.loading_mean = MatrixXd::Zero(n, r);
  pr.loading_var = MatrixXd::Constant(n, r, sopt.loading_var);
  pr.mu_mean.resize(n);
  for (Index i = 0; i < n; ++i) {
    const VectorXd c = raw.col(i).array() - raw.col(i).mean();
    const double v = c.squaredNorm() / static_cast<double>(std::max<Index>(1, raw.rows() - 1));
    if (!(v > 0.0)) throw NonPositiveScale("constant series " + std::to_string(i));
    pr.mu_mean[i] = std::log(sopt.idio_share * v);
  }
  pr.mu_var = VectorXd::Constant(n, sopt.mu_var);
  pr.phi_mean = VectorXd::Constant(n + r, sopt.phi_mean);
  pr.phi_var = VectorXd::Constant(n + r, sopt.phi_var);
  pr.sigma2_shape = VectorXd::Constant(n + r, sopt.sigma2_shape);
  pr.sigma2_scale = VectorXd::Constant(n + r, sopt.sigma2_scale);
  return pr;
}

inline ValidationReport validate_prior(const PriorSpec& pr, Index n, Index p, Index r) {
  ValidationReport rep;
  const Index k = n * p + 1;
  auto shape = [&](const MatrixXd& a, Index rows, Index cols, const char* name) {
    if (a.rows() != rows || a.cols() != cols)
      rep.fail(std::string(name) + " has shape " + std::to_string(a.rows()) + "x" +
               std::to_string(a.cols()) + ", expected " + std::to_string(rows) + "x" +
               std::to_string(cols));
  };
  shape(pr.beta_mean, k, n, "beta_mean");
  shape(pr.beta_var, k, n, "beta_var");
  shape(pr.loading_mean, n, r, "loading_mean");
  shape(pr.loading_var, n, r, "loading_var");
  shape(pr.mu_mean, n, 1, "mu_mean");
  shape(pr.mu_var, n, 1, "mu_var");
  shape(pr.phi_mean, n + r, 1, "phi_mean");
  shape(pr.phi_var, n + r, 1, "phi_var");
  shape(pr.sigma2_shape, n + r, 1, "sigma2_shape");
  shape(pr.sigma2_scale, n + r, 1, "sigma2_scale");
  if (!rep.ok) return rep;
  if ((pr.beta_var.array() <= 0).any()) rep.fail("beta_var must be positive");
  if ((pr.loading_var.array() <= 0).any()) rep.fail("loading_var must be positive");
  if ((pr.mu_var.array() <= 0).any()) rep.fail("mu_var must be positive");
  if ((pr.phi_var.array() <= 0).any()) rep.fail("phi_var must be positive");
  if ((pr.sigma2_shape.array() <= 1).any()) rep.fail("sigma2_shape must exceed 1");
  if ((pr.sigma2_scale.array() <= 0).any()) rep.fail("sigma2_scale must be positive");
  return rep;
}

/// Dimension checks plus the soft bound on the factor count.
inline ValidationReport validate_model_spec(const ModelSpec& s, Index T) {
  ValidationReport rep;
  if (s.n < 1) rep.fail("n must be >= 1");
  if (s.p < 1) rep.fail("p must be >= 1");
  if (s.r < 0) rep.fail("r must be >= 0");
  if (T <= s.p) rep.fail("sample length must exceed p");
  if (s.signs.rows() != s.n || s.signs.cols() != s.r) rep.fail("sign matrix shape");
  if (!rep.ok) return rep;
  const auto prior = validate_prior(s.prior, s.n, s.p, s.r);
  for (const auto& m : prior.messages) rep.fail(m);
  if (2 * s.r > s.n - 1)
    rep.messages.push_back("warning: r exceeds (n-1)/2; loadings may not be identified");
  return rep;
}

// ---------------------------------------------------------------------------
// Identification checks

/// Every column carries a sign, and no two columns coincide up to a flip.
inline ValidationReport validate_point_identification(const SignMatrix& s) {
  ValidationReport rep;
  const Index n = s.rows(), r = s.cols();
  auto flip = [](Sign v) {
    if (v == Sign::pos) return Sign::neg;
    if (v == Sign::neg) return Sign::pos;
    return v;
  };
  for (Index j = 0; j < r; ++j) {
    bool signed_ = false;
    for (Index i = 0; i < n; ++i)
      if (s(i, j) == Sign::pos || s(i, j) == Sign::neg) signed_ = true;
    if (!signed_) rep.fail("column " + std::to_string(j) + " unsigned");
  }
  for (Index a = 0; a < r; ++a)
    for (Index b = a + 1; b < r; ++b) {
      bool same = true, mirrored = true;
      for (Index i = 0; i < n; ++i) {
        if (s(i, a) != s(i, b)) same = false;
        if (s(i, a) != flip(s(i, b))) mirrored = false;
      }
      if (same || mirrored) {
        rep.fail("columns " + std::to_string(a) + " and " + std::to_string(b) +
                 (same ? " are identical" : " are sign-flips of each other"));
        rep.column_pairs.emplace_back(a, b);
      }
    }
  return rep;
}

/// Advisory rank check: after deleting any one row, two disjoint r-row
/// blocks with full rank should remain. Blocks are picked greedily.
inline ValidationReport check_loadings_rank_heuristic(const MatrixXd& L, double tol = 1e-8) {
  ValidationReport rep;
  const Index n = L.rows(), r = L.cols();
  if (r == 0) return rep;
  if (n < 2 * r + 1) {
    rep.fail("need at least 2r+1 rows");
    return rep;
  }
  auto smallest_sv = [](const MatrixXd& a) {
    if (a.rows() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(a);
    return svd.singularValues().minCoeff();
  };
  // Greedy: grow a block one row at a time, keeping the row that maximizes
  // the smallest singular value of the rows chosen so far.
  auto pick_block = [&](std::vector<Index>& pool, double& margin) {
    std::vector<Index> block;
    for (Index step = 0; step < r; ++step) {
      double best = -1.0;
      std::size_t best_pos = 0;
      for (std::size_t q = 0; q < pool.size(); ++q) {
        MatrixXd trial(step + 1, r);
        for (Index b = 0; b < step; ++b) trial.row(b) = L.row(block[static_cast<std::size_t>(b)]);
        trial.row(step) = L.row(pool[q]);
        Eigen::JacobiSVD<MatrixXd> svd(trial);
        const double v = svd.singularValues()[step];
        if (v > best) {
          best = v;
          best_pos = q;
        }
      }
      block.push_back(pool[best_pos]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best_pos));
    }
    MatrixXd B(r, r);
    for (Index b = 0; b < r; ++b) B.row(b) = L.row(block[static_cast<std::size_t>(b)]);
    margin = smallest_sv(B);
  };
  const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
  double worst = std::numeric_limits<double>::infinity();
  for (Index del = 0; del < n; ++del) {
    std::vector<Index> pool;
    for (Index i = 0; i < n; ++i)
      if (i != del) pool.push_back(i);
    double m1 = 0.0, m2 = 0.0;
    pick_block(pool, m1);
    pick_block(pool, m2);
    worst = std::min(worst, std::min(m1, m2));
  }
  rep.margin = worst;
  if (!(worst > tol * scale))
    rep.fail("no two disjoint full-rank blocks after row deletion (margin " + std::to_string(worst) + ")");
  return rep;
}

// ---------------------------------------------------------------------------
// Reordering

/// Variable reordering: new variable i is old variable order[i].
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<Index> order) : order_(std::move(order)) {
    std::vector<bool> seen(order_.size(), false);
    for (Index v : order_) {
      if (v < 0 || v >= size() || seen[static_cast<std::size_t>(v)])
        throw ConfigError("permutation is not a bijection");
      seen[static_cast<std::size_t>(v)] = true;
    }
  }
  static Permutation identity(Index n) {
    std::vector<Index> o(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), Index{0});
    return Permutation(std::move(o));
  }
  Index size() const { return static_cast<Index>(order_.size()); }
  Index operator[](Index i) const { return order_[static_cast<std::size_t>(i)]; }
  const std::vector<Index>& order() const { return order_; }
  Permutation inverse() const {
    std::vector<Index> inv(order_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) inv[static_cast<std::size_t>(order_[i])] = static_cast<Index>(i);
    return Permutation(std::move(inv));
  }

  /// Reorder the columns of a T×n data matrix.
  MatrixXd apply_columns(const MatrixXd& a) const {
    MatrixXd out(a.rows(), a.cols());
    for (Index i = 0; i < size(); ++i) out.col(i) = a.col((*this)[i]);
    return out;
  }
  MatrixXd apply_rows(const MatrixXd& a) const {
    MatrixXd out(a.rows(), a.cols());
    for (Index i = 0; i < size(); ++i) out.row(i) = a.row((*this)[i]);
    return out;
  }
  VectorXd apply(const VectorXd& v) const {
    VectorXd out(v.size());
    for (Index i = 0; i < size(); ++i) out[i] = v[(*this)[i]];
    out.tail(v.size() - size()) = v.tail(v.size() - size());
    return out;
  }

  /// Row map for the regressor layout: intercept fixed, each lag block reordered.
  std::vector<Index> regressor_order(Index p) const {
    const Index n = size();
    std::vector<Index> rows{0};
    for (Index l = 0; l < p; ++l)
      for (Index i = 0; i < n; ++i) rows.push_back(1 + l * n + (*this)[i]);
    return rows;
  }

 private:
  std::vector<Index> order_;
};

/// Reorder a parameter set and its states to follow a reordering of the
/// variables. Factor-specific pieces are untouched.
inline std::pair<ParamDraw, LatentStates> permute_model(const ParamDraw& d, const LatentStates& s,
                                                        const Permutation& perm) {
  const Index n = d.n(), r = d.r(), p = d.lags();
  if (perm.size() != n) throw DimensionMismatch("permutation size vs n");
  if (s.h.cols() != n + r || d.phi.size() != n + r || d.sigma2.size() != n + r)
    throw DimensionMismatch("state layout vs parameters");
  ParamDraw o;
  const auto rows = perm.regressor_order(p);
  o.coef.resize(d.coef.rows(), n);
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < d.coef.rows(); ++q)
      o.coef(q, i) = d.coef(rows[static_cast<std::size_t>(q)], perm[i]);
  o.L = perm.apply_rows(d.L);
  o.mu = perm.apply(d.mu);
  o.phi = perm.apply(d.phi);
  o.sigma2 = perm.apply(d.sigma2);
  LatentStates t;
  t.f = s.f;
  t.h = s.h;
  for (Index i = 0; i < n; ++i) t.h.col(i) = s.h.col(perm[i]);
  return {std::move(o), std::move(t)};
}

/// Reorder a prior the same way as the parameters.
inline PriorSpec permute_prior(const PriorSpec& pr, const Permutation& perm, Index p) {
  const Index n = perm.size();
  const auto rows = perm.regressor_order(p);
  PriorSpec o = pr;
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < pr.beta_mean.rows(); ++q) {
      o.beta_mean(q, i) = pr.beta_mean(rows[static_cast<std::size_t>(q)], perm[i]);
      o.beta_var(q, i) = pr.beta_var(rows[static_cast<std::size_t>(q)], perm[i]);
    }
  o.loading_mean = perm.apply_rows(pr.loading_mean);
  o.loading_var = perm.apply_rows(pr.loading_var);
  o.mu_mean = perm.apply(pr.mu_mean);
  o.mu_var = perm.apply(pr.mu_var);
  o.phi_mean = perm.apply(pr.phi_mean);
  o.phi_var = perm.apply(pr.phi_var);
  o.sigma2_shape = perm.apply(pr.sigma2_shape);
  o.sigma2_scale = perm.apply(pr.sigma2_scale);
  return o;
}

}  // namespace fsvar
