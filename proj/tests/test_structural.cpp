#include <gtest/gtest.h>

#include "fsvar/simulate.hpp"
#include "fsvar/structural.hpp"
#include "test_util.hpp"

using namespace fsvar;

namespace {

// Stable random draw with mixed-sign loadings and volatilities.
ParamDraw random_draw(Index n, Index p, Index r, RandomSource& rng) {
  DgpConfig c;
  c.n = n;
  c.p = p;
  int rejected = 0;
  ParamDraw d;
  d.coef = draw_stable_coefficients(c, rng, rejected);
  d.L.resize(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) d.L(i, j) = rng.normal();
  d.mu = VectorXd::Zero(n);
  d.phi = VectorXd::Constant(n + r, 0.9);
  d.sigma2 = VectorXd::Constant(n + r, 0.05);
  return d;
}

MatrixXd random_states(Index T, Index m, RandomSource& rng) {
  MatrixXd h(T, m);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < m; ++i) h(t, i) = rng.normal(0.0, 0.7);
  return h;
}

}  // namespace

TEST(Vma, ScalarMultipleOfIdentity) {
  const double rho = 0.7;
  const auto v = vma_coefficients({rho * MatrixXd::Identity(3, 3)}, 6);
  ASSERT_EQ(v.phi.size(), 7u);
  for (Index s = 0; s <= 6; ++s)
    EXPECT_LT((v.phi[static_cast<std::size_t>(s)] - std::pow(rho, s) * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(),
              1e-15);
  EXPECT_FALSE(v.nonstationary);
}

TEST(Vma, EqualsCompanionPowers) {
  RandomSource rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = random_draw(4, 3, 1, rng);
    const auto c = companion_form(d);
    const MatrixXd J = c.selector();
    const auto v = vma_coefficients(lag_matrices(d), 12);
    MatrixXd P = MatrixXd::Identity(c.A.rows(), c.A.cols());
    for (Index s = 0; s <= 12; ++s) {
      EXPECT_LT((v.phi[static_cast<std::size_t>(s)] - J * P * J.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      P = P * c.A;
    }
  }
}

TEST(Vma, HorizonZeroAndErrors) {
  const auto v = vma_coefficients({MatrixXd::Constant(2, 2, 0.1)}, 0);
  ASSERT_EQ(v.phi.size(), 1u);
  EXPECT_EQ(v.phi[0], MatrixXd::Identity(2, 2));
  EXPECT_THROW(vma_coefficients({MatrixXd::Identity(2, 2)}, -1), ConfigError);
  EXPECT_THROW(vma_coefficients({}, 3), DimensionMismatch);
  EXPECT_TRUE(vma_coefficients({1.01 * MatrixXd::Identity(2, 2)}, 2).nonstationary);
}

TEST(Irf, ImpactIsLoadingsTimesFactorScale) {
  RandomSource rng(2);
  const auto d = random_draw(5, 2, 2, rng);
  const MatrixXd h = random_states(10, 7, rng);
  for (Index t : {0, 4, 9}) {
    const auto irf = impulse_responses(d, h, t, 8);
    VectorXd sd(2);
    sd << std::exp(0.5 * h(t, 5)), std::exp(0.5 * h(t, 6));
    const MatrixXd expected = d.L * sd.asDiagonal();
    EXPECT_EQ(irf.theta.front(), expected);  // exact
    EXPECT_EQ(irf.theta.size(), 9u);
  }
  EXPECT_THROW(impulse_responses(d, h, 10, 3), ConfigError);
}

TEST(Irf, LinearInLoadings) {
  RandomSource rng(3);
  auto d = random_draw(4, 2, 1, rng);
  const MatrixXd h = random_states(5, 5, rng);
  const auto a = impulse_responses(d, h, 2, 10);
  d.L *= -2.5;
  const auto b = impulse_responses(d, h, 2, 10);
  for (std::size_t l = 0; l < a.theta.size(); ++l)
    EXPECT_LT((b.theta[l] + 2.5 * a.theta[l]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fevd, SharesSumToOne) {
  RandomSource rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 2 + trial % 5, r = trial % 4;
    const auto d = random_draw(n, 1 + trial % 3, r, rng);
    const MatrixXd h = random_states(6, n + r, rng);
    const auto fv = fevd(d, h, trial % 6, 15);
    ASSERT_EQ(fv.shares.size(), 15u);
    for (std::size_t l = 0; l < fv.shares.size(); ++l) {
      EXPECT_LT((fv.shares[l].rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
      EXPECT_GE(fv.shares[l].minCoeff(), 0.0);
      if (r > 0) EXPECT_LT((fv.within_factor[l].rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Fevd, OneStepHandFormula) {
  RandomSource rng(5);
  const auto d = random_draw(3, 2, 2, rng);
  const MatrixXd h = random_states(4, 5, rng);
  const auto fv = fevd(d, h, 1, 1);
  for (Index i = 0; i < 3; ++i) {
    const double c0 = d.L(i, 0) * d.L(i, 0) * std::exp(h(1, 3));
    const double c1 = d.L(i, 1) * d.L(i, 1) * std::exp(h(1, 4));
    const double u = std::exp(h(1, i));
    const double tot = c0 + c1 + u;
    EXPECT_NEAR(fv.shares[0](i, 0), c0 / tot, 1e-14);
    EXPECT_NEAR(fv.shares[0](i, 1), c1 / tot, 1e-14);
    EXPECT_NEAR(fv.shares[0](i, 2), u / tot, 1e-14);
    EXPECT_NEAR(fv.within_factor[0](i, 0), c0 / (c0 + c1), 1e-14);
  }
}

TEST(Fevd, ZeroLoadingsAllIdiosyncratic) {
  RandomSource rng(6);
  auto d = random_draw(3, 1, 2, rng);
  d.L.setZero();
  const MatrixXd h = random_states(3, 5, rng);
  const auto fv = fevd(d, h, 0, 5);
  for (const auto& s : fv.shares) {
    EXPECT_EQ(s.leftCols(2).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((s.col(2).array() - 1.0).abs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(fevd(d, h, 0, 0), ConfigError);
}

TEST(HistoricalDecomposition, GapIsPropagatedInitialCondition) {
  RandomSource rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    DgpConfig c;
    c.n = 3;
    c.p = 1 + trial % 3;
    c.r = 1 + trial % 2;
    c.T = 60;
    const auto sim = generate_dataset(c, rng);
    const VarData data = make_var_data(sim.y, c.p);
    const auto hd = historical_decomposition(sim.truth, sim.states.f, data);
    // Contributions + (−gap) reconstruct the demeaned data.
    MatrixXd total = hd.idiosyncratic;
    for (const auto& f : hd.factor) total += f;
    EXPECT_LT((total - hd.gap - hd.demeaned).cwiseAbs().maxCoeff(), 1e-8);
    // Oracle for the gap: presample deviations pushed through companion powers.
    const auto comp = companion_form(sim.truth);
    const MatrixXd J = comp.selector();
    VectorXd s(c.n * c.p);
    for (Index j = 0; j < c.p; ++j)
      s.segment(j * c.n, c.n) = sim.y.row(c.p - 1 - j).transpose() - hd.mean;
    for (Index t = 0; t < c.T; ++t) {
      s = comp.A * s;
      const VectorXd expected = -(J * s);
      EXPECT_LT((hd.gap.row(t).transpose() - expected).cwiseAbs().maxCoeff(), 1e-8) << "t=" << t;
    }
    // Stationary draw: the initial condition fades.
    EXPECT_LT(hd.gap.bottomRows(1).cwiseAbs().maxCoeff(), hd.gap.topRows(1).cwiseAbs().maxCoeff() + 1e-12);
    const MatrixXd v = hd.variable(0);
    EXPECT_EQ(v.cols(), c.r + 1);
  }
}

TEST(HistoricalDecomposition, Errors) {
  RandomSource rng(8);
  auto d = random_draw(2, 1, 1, rng);
  const MatrixXd raw = MatrixXd::Random(20, 2);
  const VarData data = make_var_data(raw, 1);
  EXPECT_THROW(historical_decomposition(d, MatrixXd::Zero(5, 1), data), DimensionMismatch);
  // A unit root in every series: I − A₁ is singular.
  d.coef.block(1, 0, 2, 2) = MatrixXd::Identity(2, 2);
  EXPECT_THROW(var_mean(d), NonInvertibleMean);
  EXPECT_THROW(historical_decomposition(d, MatrixXd::Zero(data.T(), 1), data), NonInvertibleMean);
}

TEST(EmpiricalQuantile, Interpolates) {
  EXPECT_DOUBLE_EQ(empirical_quantile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(empirical_quantile({5.0}, 0.9), 5.0);
  EXPECT_DOUBLE_EQ(empirical_quantile({1.0, 2.0}, 0.0), 1.0);
  EXPECT_THROW(empirical_quantile({}, 0.5), InsufficientDraws);
}
