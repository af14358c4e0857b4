#include <gtest/gtest.h>

#include <algorithm>

#include "fsvar/marglike.hpp"
#include "fsvar/simulate.hpp"
#include "test_util.hpp"

using namespace fsvar;

namespace {

CeFamilyParams reference_family(Index n, Index p, Index r) {
  const Index k = n * p + 1, m = n + r;
  CeFamilyParams f;
  f.shape = FamilyShape::diagonal;
  f.coef_mean = MatrixXd::Constant(k, n, 0.1);
  f.coef_var = MatrixXd::Constant(k, n, 0.04);
  f.loading_mean = MatrixXd::Constant(n, r, 0.5);
  f.loading_var = MatrixXd::Constant(n, r, 0.3);
  f.signs = SignMatrix(n, r);
  if (r > 0) {
    f.signs(0, 0) = Sign::pos;
    if (n > 1) f.signs(1, 0) = Sign::neg;
    if (n > 2) f.signs(2, 0) = Sign::zero;
  }
  f.sigma2_shape = VectorXd::Constant(m, 6.0);
  f.sigma2_scale = VectorXd::Constant(m, 0.2);
  f.mu_mean = VectorXd::Constant(n, -0.5);
  f.mu_var = VectorXd::Constant(n, 0.1);
  f.phi_mean = VectorXd::Constant(m, 0.9);
  f.phi_var = VectorXd::Constant(m, 0.01);
  return f;
}

std::vector<ParamDraw> draws_from(const CeFamilyParams& f, int N, RandomSource& rng) {
  std::vector<ParamDraw> d;
  for (int s = 0; s < N; ++s) d.push_back(sample_ce_family(f, rng));
  return d;
}

}  // namespace

TEST(GaussianMle, ConstantSampleHitsVarianceFloor) {
  const auto [m, v] = gaussian_mle(std::vector<double>(50, 3.25));
  EXPECT_DOUBLE_EQ(m, 3.25);
  EXPECT_EQ(v, kVarianceFloor);
}

TEST(InverseGammaFit, RecoversShapeAndScale) {
  RandomSource rng(1);
  std::vector<double> x(1000000);
  for (auto& v : x) v = rng.inverse_gamma(5.0, 2.0);
  const auto fit = fit_inverse_gamma(x);
  EXPECT_NEAR(fit.shape, 5.0, 0.05);
  EXPECT_NEAR(fit.scale, 2.0, 0.02);
}

TEST(InverseGammaFit, LikelihoodDominatesMomentStart) {
  RandomSource rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(300);
    const double a = rng.uniform(2.5, 10.0), b = rng.uniform(0.01, 3.0);
    for (auto& v : x) v = rng.inverse_gamma(a, b);
    const auto fit = fit_inverse_gamma(x);
    double at_fit = 0.0, at_moment = 0.0;
    for (double v : x) {
      at_fit += stats::log_inverse_gamma_pdf(v, fit.shape, fit.scale);
      at_moment += stats::log_inverse_gamma_pdf(v, fit.moment_shape, fit.moment_scale);
    }
    EXPECT_GE(at_fit, at_moment - 1e-9);
  }
}

TEST(FitCeFamily, TooFewDraws) {
  RandomSource rng(3);
  const auto f = reference_family(2, 1, 1);
  EXPECT_THROW(fit_ce_family(draws_from(f, 29, rng), f.signs), InsufficientDraws);
}

TEST(FitCeFamily, RecoversGeneratingFamily) {
  RandomSource rng(4);
  auto f = reference_family(3, 1, 1);
  f.signs = SignMatrix(3, 1);  // untruncated, so moments are the family's
  const auto fit = fit_ce_family(draws_from(f, 20000, rng), f.signs);
  EXPECT_LT((fit.coef_mean - f.coef_mean).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT((fit.coef_var - f.coef_var).cwiseAbs().maxCoeff(), 0.003);
  EXPECT_LT((fit.loading_mean - f.loading_mean).cwiseAbs().maxCoeff(), 0.03);
  EXPECT_LT((fit.sigma2_shape - f.sigma2_shape).cwiseAbs().maxCoeff(), 0.3);
  EXPECT_LT((fit.mu_mean - f.mu_mean).cwiseAbs().maxCoeff(), 0.01);
}

TEST(FitCeFamily, DrawOrderInvariant) {
  RandomSource rng(5);
  const auto f = reference_family(3, 2, 1);
  auto draws = draws_from(f, 200, rng);
  for (auto shape : {FamilyShape::diagonal, FamilyShape::per_equation, FamilyShape::joint_coef,
                     FamilyShape::full}) {
    CeFitOptions o;
    o.shape = shape;
    const auto a = fit_ce_family(draws, f.signs, o);
    auto shuffled = draws;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    const auto b = fit_ce_family(shuffled, f.signs, o);
    EXPECT_LT((a.coef_mean - b.coef_mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.coef_var - b.coef_var).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.sigma2_shape - b.sigma2_shape).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((a.phi_mean - b.phi_mean).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t i = 0; i < a.coef_chol.size(); ++i)
      EXPECT_LT((a.coef_chol[i] - b.coef_chol[i]).cwiseAbs().maxCoeff(), 1e-10);
    if (shape == FamilyShape::full) {
      EXPECT_LT((a.full_mean - b.full_mean).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((a.full_chol - b.full_chol).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Unconstrained, RoundTripAndJacobian) {
  RandomSource rng(15);
  const auto f = reference_family(3, 2, 1);
  const Index k = 7, n = 3, r = 1;
  for (const auto& d : draws_from(f, 50, rng)) {
    VectorXd z;
    const double logjac = to_unconstrained(d, f.signs, z);
    ASSERT_EQ(z.size(), unconstrained_dim(f.signs, k, n, r));
    const ParamDraw back = from_unconstrained(z, f.signs, k, n, r);
    EXPECT_LT((back.coef - d.coef).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((back.L - d.L).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((back.sigma2 - d.sigma2).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((back.phi - d.phi).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((back.mu - d.mu).cwiseAbs().maxCoeff(), 1e-14);
    // Jacobian by central differences, one coordinate at a time (the map
    // is diagonal).
    double fd = 0.0;
    for (Index a = 0; a < z.size(); ++a) {
      VectorXd zp = z, zm = z;
      const double h = 1e-6;
      zp[a] += h;
      zm[a] -= h;
      const ParamDraw up = from_unconstrained(zp, f.signs, k, n, r), dn = from_unconstrained(zm, f.signs, k, n, r);
      // Only one original coordinate moves; summing picks it out.
      const double delta = (up.coef - dn.coef).sum() + (up.L - dn.L).sum() + (up.sigma2 - dn.sigma2).sum() +
               (up.mu - dn.mu).sum() + (up.phi - dn.phi).sum();
      fd += std::log(std::abs(delta / (2.0 * h)));
    }
    EXPECT_NEAR(logjac, -fd, 1e-6);
  }
}

TEST(CeFamily, DrawsRespectSignsAndSupport) {
  RandomSource rng(6);
  const auto f = reference_family(3, 1, 1);
  for (const auto& d : draws_from(f, 2000, rng)) {
    ASSERT_TRUE(f.signs.satisfied_by(d.L));
    ASSERT_LT(d.phi.cwiseAbs().maxCoeff(), 1.0);
    ASSERT_GT(d.sigma2.minCoeff(), 0.0);
  }
}

TEST(CeFamily, DensityIsNormalized) {
  // E_g[q/g] = 1 for any normalized q on the same support; q is g with
  // shifted parameters, so both truncation normalizers are exercised.
  RandomSource rng(7);
  for (auto shape : {FamilyShape::diagonal, FamilyShape::per_equation, FamilyShape::full}) {
    auto g = reference_family(3, 1, 1);
    g.shape = shape;
    if (shape == FamilyShape::per_equation)
      for (Index i = 0; i < 3; ++i) g.coef_chol.push_back(g.coef_var.col(i).cwiseSqrt().asDiagonal());
    if (shape == FamilyShape::full) {
      // Fit to blockwise draws so the full covariance is non-trivial.
      RandomSource src(16);
      CeFitOptions o;
      const auto fit = fit_ce_family(draws_from(reference_family(3, 1, 1), 400, src), g.signs, o);
      g.full_mean = fit.full_mean;
      g.full_chol = fit.full_chol;
    }
    auto q = g;
    q.loading_mean.array() -= 0.3;
    q.phi_mean.array() += 0.05;
    q.mu_mean.array() += 0.1;
    q.coef_mean.array() -= 0.05;
    if (shape == FamilyShape::full) q.full_mean.array() += 0.1;
    const int N = 40000;
    std::vector<double> lw(N);
    for (auto& w : lw) {
      const auto d = sample_ce_family(g, rng);
      w = log_ce_density(q, d) - log_ce_density(g, d);
    }
    const auto s = stats::summarize_log_weights(lw);
    EXPECT_NEAR(s.log_mean, 0.0, 4.0 * s.log_standard_error);
  }
}

TEST(PriorDensity, TruncationNormalizersIncluded) {
  // One positive loading with prior N(0, 1): density at x is 2·φ(x).
  PriorSpec pr;
  pr.beta_mean = MatrixXd::Zero(2, 1);
  pr.beta_var = MatrixXd::Ones(2, 1);
  pr.loading_mean = MatrixXd::Zero(1, 1);
  pr.loading_var = MatrixXd::Ones(1, 1);
  pr.mu_mean = VectorXd::Zero(1);
  pr.mu_var = VectorXd::Ones(1);
  pr.phi_mean = VectorXd::Zero(2);
  pr.phi_var = VectorXd::Ones(2);
  pr.sigma2_shape = VectorXd::Constant(2, 3.0);
  pr.sigma2_scale = VectorXd::Ones(2);
  ParamDraw d;
  d.coef = MatrixXd::Zero(2, 1);
  d.L = MatrixXd::Constant(1, 1, 0.7);
  d.mu = VectorXd::Zero(1);
  d.phi = VectorXd::Zero(2);
  d.sigma2 = VectorXd::Ones(2);
  SignMatrix pos(1, 1, Sign::pos), free(1, 1);
  EXPECT_NEAR(log_prior_density(pr, pos, d) - log_prior_density(pr, free, d), std::log(2.0), 1e-12);
}

namespace {

// Fixed-volatility conjugate setup: the log-volatility is pinned at mu0 by
// near-degenerate priors, leaving a normal linear model.
struct ConjugateCase {
  MatrixXd raw;
  ModelSpec spec;
  double exact = 0.0;
};

ConjugateCase conjugate_case() {
  ConjugateCase c;
  RandomSource rng(8);
  const Index T = 6, p = 1;
  c.raw.resize(T + p, 1);
  c.raw(0, 0) = 0.3;
  for (Index t = 1; t <= T; ++t) c.raw(t, 0) = 0.5 + 0.4 * c.raw(t - 1, 0) + 0.8 * rng.normal();
  const double mu0 = std::log(0.6);
  PriorSpec pr;
  pr.beta_mean = MatrixXd::Zero(2, 1);
  pr.beta_mean(1, 0) = 0.2;
  pr.beta_var = MatrixXd::Constant(2, 1, 0.5);
  pr.loading_mean = MatrixXd::Zero(1, 0);
  pr.loading_var = MatrixXd::Zero(1, 0);
  pr.mu_mean = VectorXd::Constant(1, mu0);
  pr.mu_var = VectorXd::Constant(1, 1e-10);
  pr.phi_mean = VectorXd::Constant(1, 0.5);
  pr.phi_var = VectorXd::Constant(1, 0.1);
  pr.sigma2_shape = VectorXd::Constant(1, 50.0);
  pr.sigma2_scale = VectorXd::Constant(1, 50.0 * 1e-10);
  c.spec = ModelSpec{1, p, 0, pr, SignMatrix(1, 0)};
  const VarData d = make_var_data(c.raw, p);
  MatrixXd cov = d.X * pr.beta_var.col(0).asDiagonal() * d.X.transpose();
  cov.diagonal().array() += std::exp(mu0);
  c.exact = testutil::dense_log_normal(d.Y.col(0), d.X * pr.beta_mean.col(0), cov);
  return c;
}

}  // namespace

TEST(MarginalLikelihood, ConjugateMicroModel) {
  const auto c = conjugate_case();
  const VarData d = make_var_data(c.raw, 1);
  McmcSettings ms;
  ms.burn_in = 200;
  ms.draws = 2000;
  ms.seed = 3;
  const auto chain = run_chain(d, c.spec, ms);
  RandomSource rng(9);
  MarginalLikelihoodOptions o;
  o.R2 = 2000;
  const auto res = marginal_likelihood(d, c.spec, chain, rng, o);
  EXPECT_NEAR(res.log_estimate, c.exact, 3.0 * res.standard_error + 1e-3);
  EXPECT_LT(res.standard_error, 0.05);
  EXPECT_GT(res.ess, 100.0);
}

TEST(MarginalLikelihood, IndependentRunsAgree) {
  RandomSource rng(10);
  DgpConfig g;
  g.n = 3;
  g.r = 1;
  g.p = 1;
  g.T = 80;
  const auto sim = generate_dataset(g, rng);
  const VarData d = make_var_data(sim.y, 1);
  ModelSpec spec{3, 1, 1, default_prior(sim.y, 1, 1), SignMatrix(3, 1)};
  Index best = 0;
  sim.truth.L.col(0).cwiseAbs().maxCoeff(&best);
  spec.signs(best, 0) = sim.truth.L(best, 0) > 0 ? Sign::pos : Sign::neg;
  McmcSettings ms;
  ms.burn_in = 300;
  ms.draws = 1500;
  ms.seed = 11;
  const auto chain = run_chain(d, spec, ms);
  MarginalLikelihoodOptions o;
  o.R2 = 100;
  RandomSource a(12), b(13);
  const auto ra = marginal_likelihood(d, spec, chain, a, o);
  const auto rb = marginal_likelihood(d, spec, chain, b, o);
  EXPECT_NEAR(ra.log_estimate, rb.log_estimate, 3.0 * std::hypot(ra.standard_error, rb.standard_error));
  EXPECT_EQ(ra.R1_used.size(), 100u);
  // Same seed, same answer, regardless of thread count.
  RandomSource c1(12), c2(12);
  o.threads = 3;
  const auto rc = marginal_likelihood(d, spec, chain, c1, o);
  o.threads = 1;
  const auto rd = marginal_likelihood(d, spec, chain, c2, o);
  EXPECT_EQ(rc.log_estimate, rd.log_estimate);
  EXPECT_EQ(rc.log_estimate, ra.log_estimate);
}

TEST(Selection, RankingRules) {
  std::vector<CandidateResult> c(4);
  c[0].r = 3;
  c[0].log_ml = -10.0;
  c[1].r = 1;
  c[1].log_ml = -10.0;
  c[2].r = 2;
  c[2].failed = true;
  c[3].r = 4;
  c[3].log_ml = -12.0;
  rank_candidates(c);
  EXPECT_EQ(c[0].r, 1);
  EXPECT_EQ(c[1].r, 3);
  EXPECT_EQ(c[2].r, 4);
  EXPECT_EQ(c[3].r, 2);
}

TEST(Selection, SingleCandidateAndFailureIsolation) {
  RandomSource rng(14);
  DgpConfig g;
  g.n = 3;
  g.r = 1;
  g.p = 1;
  g.T = 50;
  const auto sim = generate_dataset(g, rng);
  SelectionSettings s;
  s.mcmc.burn_in = 200;
  s.mcmc.draws = 1000;
  s.ml.R2 = 50;
  const auto one = select_factor_count(sim.y, 1, {1}, s);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.front().r, 1);
  EXPECT_FALSE(one.front().failed) << one.front().error;
  // A negative count fails on its own without aborting the sweep.
  const auto two = select_factor_count(sim.y, 1, {-1, 1}, s);
  EXPECT_EQ(two.front().r, 1);
  EXPECT_TRUE(two.back().failed);
  EXPECT_THROW(select_factor_count(sim.y, 1, {}, s), ConfigError);
}
