#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "fsvar/random.hpp"
#include "fsvar/stats.hpp"
#include "fsvar/tmvn.hpp"
#include "test_util.hpp"

using namespace fsvar;

TEST(Stats, LogNormalIntervalTails) {
  boost::math::normal nd;
  EXPECT_NEAR(stats::log_normal_interval(-1.0, 2.0),
              std::log(boost::math::cdf(nd, 2.0) - boost::math::cdf(nd, -1.0)), 1e-13);
  EXPECT_NEAR(stats::log_normal_interval(3.0, 4.0),
              std::log(boost::math::cdf(boost::math::complement(nd, 3.0)) -
                       boost::math::cdf(boost::math::complement(nd, 4.0))),
              1e-12);
  // Far tail: log Q(x) ~ -x²/2 - log(x) - ½log(2π)
  const double x = 40.0;
  EXPECT_NEAR(stats::log_normal_sf(x), -0.5 * x * x - std::log(x) - 0.5 * stats::log_2pi, 1e-3);
  EXPECT_NEAR(stats::log_normal_interval(-40.0, -39.0), stats::log_normal_interval(39.0, 40.0), 1e-12);
  EXPECT_EQ(stats::log_normal_interval(1.0, 1.0), -stats::inf);
  EXPECT_NEAR(stats::log_normal_interval(-stats::inf, stats::inf), 0.0, 1e-15);
}

TEST(Stats, QuantileInvertsCdf) {
  for (double p : {1e-10, 0.01, 0.3, 0.5, 0.9, 0.999999})
    EXPECT_NEAR(stats::normal_cdf(stats::normal_quantile(p)), p, 1e-12 * std::max(1.0, p * 100));
}

TEST(Stats, LogWeightSummaryShiftInvariant) {
  const std::vector<double> a{-1000.0, -1001.0, -999.5, -1002.0};
  std::vector<double> b = a;
  for (double& v : b) v += 700.0;
  const auto sa = stats::summarize_log_weights(a), sb = stats::summarize_log_weights(b);
  EXPECT_NEAR(sa.log_mean + 700.0, sb.log_mean, 1e-12);
  EXPECT_NEAR(sa.log_standard_error, sb.log_standard_error, 1e-12);
  EXPECT_NEAR(sa.ess, sb.ess, 1e-12);
  const std::vector<double> eq{3.0, 3.0, 3.0};
  EXPECT_NEAR(stats::summarize_log_weights(eq).ess, 3.0, 1e-12);
  EXPECT_NEAR(stats::summarize_log_weights(eq).log_standard_error, 0.0, 1e-12);
}

TEST(Stats, InverseGammaDensityIntegratesToOne) {
  double s = 0.0;
  const double h = 1e-4;
  for (double x = h / 2; x < 50.0; x += h) s += std::exp(stats::log_inverse_gamma_pdf(x, 5.0, 2.0)) * h;
  EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(Random, SplitIndependentOfConsumption) {
  RandomSource a(7), b(7);
  for (int i = 0; i < 100; ++i) a.normal();
  EXPECT_EQ(a.split(3).normal(), b.split(3).normal());
  EXPECT_NE(b.split(3).normal(), b.split(4).normal());
}

TEST(TruncatedNormal, MomentsAcrossRegimes) {
  RandomSource rng(31);
  boost::math::normal nd;
  struct Case { double a, b; };
  for (const Case c : {Case{-0.5, 0.5}, Case{-3.0, 4.0}, Case{2.0, stats::inf}, Case{-stats::inf, -5.0},
                       Case{6.0, 6.5}}) {
    const int N = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < N; ++i) {
      const double x = truncated_standard_normal(c.a, c.b, rng);
      ASSERT_GE(x, c.a);
      ASSERT_LE(x, c.b);
      s += x;
      s2 += x * x;
    }
    const double pa = std::isfinite(c.a) ? boost::math::pdf(nd, c.a) : 0.0;
    const double pb = std::isfinite(c.b) ? boost::math::pdf(nd, c.b) : 0.0;
    const double Z = std::exp(stats::log_normal_interval(c.a, c.b));
    const double mean = (pa - pb) / Z;
    const double var = 1.0 + ((std::isfinite(c.a) ? c.a * pa : 0.0) - (std::isfinite(c.b) ? c.b * pb : 0.0)) / Z -
                       mean * mean;
    const double se = std::sqrt(var / N);
    EXPECT_NEAR(s / N, mean, 4.0 * se + 1e-12) << c.a << "," << c.b;
  }
}

TEST(Tmvn, OrthantSampleMatchesMomentsAndFallbackIsFeasible) {
  RandomSource rng(37);
  MatrixXd cov(3, 3);
  cov << 1.0, 0.6, 0.2, 0.6, 1.5, -0.3, 0.2, -0.3, 0.8;
  const VectorXd mean = (VectorXd(3) << -0.5, 0.2, 1.0).finished();
  const VectorXd lo = (VectorXd(3) << 0.0, -stats::inf, -stats::inf).finished();
  const VectorXd hi = (VectorXd(3) << stats::inf, 0.0, stats::inf).finished();
  // Reference: plain rejection from the untruncated normal.
  const MatrixXd Lc = Eigen::LLT<MatrixXd>(cov).matrixL();
  VectorXd ref = VectorXd::Zero(3);
  int kept = 0;
  while (kept < 100000) {
    const VectorXd x = mean + Lc * rng.normal_vector(3);
    if (x[0] >= 0 && x[1] <= 0) {
      ref += x;
      ++kept;
    }
  }
  ref /= kept;
  VectorXd acc = VectorXd::Zero(3);
  int exact = 0;
  for (int s = 0; s < 100000; ++s) {
    const auto d = sample_truncated_mvn(mean, cov, lo, hi, rng);
    ASSERT_GE(d.value[0], 0.0);
    ASSERT_LE(d.value[1], 0.0);
    acc += d.value;
    exact += d.exact;
  }
  acc /= 100000.0;
  EXPECT_GT(exact, 99000);
  EXPECT_LE((acc - ref).cwiseAbs().maxCoeff(), 0.02);

  // A deep orthant: the sampler must still return a feasible point.
  const VectorXd far = (VectorXd(3) << -9.0, 9.0, 0.0).finished();
  const auto d = sample_truncated_mvn(far, cov, lo, hi, rng);
  EXPECT_GE(d.value[0], 0.0);
  EXPECT_LE(d.value[1], 0.0);
}

TEST(Tmvn, HalfNormalMean) {
  RandomSource rng(41);
  MatrixXd cov = MatrixXd::Identity(2, 2);
  const VectorXd lo = (VectorXd(2) << 0.0, 0.0).finished();
  const VectorXd hi = VectorXd::Constant(2, stats::inf);
  VectorXd acc = VectorXd::Zero(2);
  const int N = 100000;
  for (int s = 0; s < N; ++s) acc += sample_truncated_mvn(VectorXd::Zero(2), cov, lo, hi, rng).value;
  acc /= N;
  const double target = std::sqrt(2.0 / M_PI);
  const double se = std::sqrt((1.0 - 2.0 / M_PI) / N);
  EXPECT_NEAR(acc[0], target, 4 * se);
  EXPECT_NEAR(acc[1], target, 4 * se);
}
