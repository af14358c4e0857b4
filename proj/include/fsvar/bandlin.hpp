#pragma once

// Symmetric band matrices: storage, Cholesky, solves, and Gaussian sampling
// from a precision-form density.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "fsvar/error.hpp"
#include "fsvar/random.hpp"
#include "fsvar/stats.hpp"

namespace fsvar {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr Index kDenseLimit = 10000;

/// Lower band storage: band(k, j) holds element (j + k, j).
class BandSymMatrix {
 public:
  BandSymMatrix() = default;
  BandSymMatrix(Index dim, Index bandwidth) : dim_(dim), bw_(bandwidth) {
    if (dim < 1) throw DimensionMismatch("band matrix needs dim >= 1");
    if (bandwidth < 0 || bandwidth >= dim) {
      // A bandwidth at or beyond dim carries no extra entries; clip it.
      if (bandwidth < 0) throw DimensionMismatch("negative bandwidth");
      bw_ = dim - 1;
    }
    bands_ = MatrixXd::Zero(bw_ + 1, dim_);
  }

  static BandSymMatrix identity(Index dim) {
    BandSymMatrix m(dim, 0);
    m.bands_.row(0).setOnes();
    return m;
  }

  /// Copy the lower band of a dense symmetric matrix.
  static BandSymMatrix from_dense(const MatrixXd& a, Index bandwidth) {
    if (a.rows() != a.cols()) throw DimensionMismatch("from_dense needs a square matrix");
    BandSymMatrix m(a.rows(), bandwidth);
    for (Index j = 0; j < m.dim_; ++j)
      for (Index k = 0; k <= m.bw_ && j + k < m.dim_; ++k) m.bands_(k, j) = a(j + k, j);
    return m;
  }

  Index dim() const { return dim_; }
  Index bandwidth() const { return bw_; }
  const MatrixXd& bands() const { return bands_; }
  MatrixXd& bands() { return bands_; }

  bool in_band(Index i, Index j) const { return std::abs(i - j) <= bw_; }

  /// Element access with implicit symmetry; out-of-band reads return 0.
  double operator()(Index i, Index j) const {
    if (i < j) std::swap(i, j);
    return i - j <= bw_ ? bands_(i - j, j) : 0.0;
  }

  /// Writable reference to the stored lower element; (i, j) must lie in band.
  double& ref(Index i, Index j) {
    if (i < j) std::swap(i, j);
    if (i - j > bw_) throw DimensionMismatch("write outside band");
    return bands_(i - j, j);
  }

  void add(Index i, Index j, double v) { ref(i, j) += v; }

  VectorXd diagonal() const { return bands_.row(0).transpose(); }

  VectorXd multiply(const VectorXd& x) const {
    if (x.size() != dim_) throw DimensionMismatch("band multiply");
    VectorXd y = bands_.row(0).transpose().cwiseProduct(x);
    for (Index k = 1; k <= bw_; ++k)
      for (Index j = 0; j + k < dim_; ++j) {
        const double v = bands_(k, j);
        y[j + k] += v * x[j];
        y[j] += v * x[j + k];
      }
    return y;
  }

  double quadratic_form(const VectorXd& x) const { return x.dot(multiply(x)); }

  BandSymMatrix& operator+=(const BandSymMatrix& o) {
    if (o.dim_ != dim_ || o.bw_ > bw_) throw DimensionMismatch("band add");
    bands_.topRows(o.bw_ + 1) += o.bands_;
    return *this;
  }

  BandSymMatrix& operator*=(double s) {
    bands_ *= s;
    return *this;
  }

  MatrixXd to_dense() const {
    if (dim_ > kDenseLimit) throw DimensionMismatch("refusing dense copy of a large band matrix");
    MatrixXd a = MatrixXd::Zero(dim_, dim_);
    for (Index j = 0; j < dim_; ++j)
      for (Index k = 0; k <= bw_ && j + k < dim_; ++k) {
        a(j + k, j) = bands_(k, j);
        a(j, j + k) = bands_(k, j);
      }
    return a;
  }

 private:
  Index dim_ = 0;
  Index bw_ = 0;
  MatrixXd bands_;
};

/// Lower-triangular band factor G with G Gᵀ equal to the factored matrix.
class BandCholeskyFactor {
 public:
  BandCholeskyFactor() = default;
  explicit BandCholeskyFactor(BandSymMatrix g) : g_(std::move(g)) {}

  Index dim() const { return g_.dim(); }
  Index bandwidth() const { return g_.bandwidth(); }
  const BandSymMatrix& storage() const { return g_; }

  /// Lower factor entry (zero above the diagonal).
  double operator()(Index i, Index j) const { return i < j ? 0.0 : g_(i, j); }

  double log_determinant() const { return 2.0 * g_.bands().row(0).array().log().sum(); }

  /// Solve G z = b.
  VectorXd solve_lower(const VectorXd& b) const {
    check(b);
    const auto& s = g_.bands();
    const Index n = dim(), bw = bandwidth();
    VectorXd z = b;
    for (Index i = 0; i < n; ++i) {
      double acc = z[i];
      for (Index k = std::max<Index>(0, i - bw); k < i; ++k) acc -= s(i - k, k) * z[k];
      z[i] = acc / s(0, i);
    }
    return z;
  }

  /// Solve Gᵀ x = z.
  VectorXd solve_upper(const VectorXd& z) const {
    check(z);
    const auto& s = g_.bands();
    const Index n = dim(), bw = bandwidth();
    VectorXd x = z;
    for (Index i = n - 1; i >= 0; --i) {
      double acc = x[i];
      for (Index k = i + 1; k <= std::min(n - 1, i + bw); ++k) acc -= s(k - i, i) * x[k];
      x[i] = acc / s(0, i);
    }
    return x;
  }

  MatrixXd lower_dense() const {
    MatrixXd a = g_.to_dense();
    return a.triangularView<Eigen::Lower>();
  }

 private:
  void check(const VectorXd& b) const {
    if (b.size() != dim()) throw DimensionMismatch("band solve: vector length " +
                                                   std::to_string(b.size()) + " vs dim " +
                                                   std::to_string(dim()));
  }
  BandSymMatrix g_;
};

inline BandCholeskyFactor band_cholesky(const BandSymMatrix& m) {
  const Index n = m.dim(), bw = m.bandwidth();
  BandSymMatrix g = m;
  auto& s = g.bands();
  for (Index j = 0; j < n; ++j) {
    const Index k0 = std::max<Index>(0, j - bw);
    double d = s(0, j);
    for (Index k = k0; k < j; ++k) d -= s(j - k, k) * s(j - k, k);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NotPositiveDefinite("non-positive pivot at index " + std::to_string(j));
    const double gjj = std::sqrt(d);
    s(0, j) = gjj;
    for (Index i = j + 1; i <= std::min(n - 1, j + bw); ++i) {
      double v = s(i - j, j);
      for (Index k = std::max<Index>(0, i - bw); k < j; ++k) v -= s(i - k, k) * s(j - k, k);
      s(i - j, j) = v / gjj;
    }
  }
  return BandCholeskyFactor(std::move(g));
}

inline VectorXd band_solve(const BandCholeskyFactor& f, const VectorXd& b) {
  return f.solve_upper(f.solve_lower(b));
}

/// N(mean, precision⁻¹), factorized once on construction.
class GaussianInPrecisionForm {
 public:
  GaussianInPrecisionForm(VectorXd mean, BandSymMatrix precision)
      : mean_(std::move(mean)), precision_(std::move(precision)) {
    if (mean_.size() != precision_.dim()) throw DimensionMismatch("gaussian mean vs precision");
    factor_ = band_cholesky(precision_);
  }

  /// Build from the canonical form: precision and precision·mean.
  static GaussianInPrecisionForm from_canonical(BandSymMatrix precision, const VectorXd& shift) {
    GaussianInPrecisionForm g(VectorXd::Zero(precision.dim()), std::move(precision));
    g.mean_ = band_solve(g.factor_, shift);
    return g;
  }

  const VectorXd& mean() const { return mean_; }
  const BandSymMatrix& precision() const { return precision_; }
  const BandCholeskyFactor& factor() const { return factor_; }
  Index dim() const { return mean_.size(); }

 private:
  VectorXd mean_;
  BandSymMatrix precision_;
  BandCholeskyFactor factor_;
};

inline VectorXd precision_sample(const GaussianInPrecisionForm& g, RandomSource& rng) {
  return g.mean() + g.factor().solve_upper(rng.normal_vector(g.dim()));
}

inline double log_gaussian_density(const GaussianInPrecisionForm& g, const VectorXd& x) {
  if (x.size() != g.dim()) throw DimensionMismatch("density argument length");
  const VectorXd d = x - g.mean();
  return -0.5 * (static_cast<double>(g.dim()) * stats::log_2pi -
                 g.factor().log_determinant() + g.precision().quadratic_form(d));
}

}  // namespace fsvar
