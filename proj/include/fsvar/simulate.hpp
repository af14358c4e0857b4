#pragma once

// Synthetic data from the VAR with factor stochastic volatility, and the
// factor-count selection experiment built on it.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsvar/error.hpp"
#include "fsvar/marglike.hpp"
#include "fsvar/model.hpp"
#include "fsvar/random.hpp"
#include "fsvar/structural.hpp"

namespace fsvar {

struct DgpConfig {
  Index n = 10, p = 4, r = 3, T = 500;
  double theta = 1.0;          // scale on the idiosyncratic shocks
  double mu = 0.0;             // idiosyncratic log-volatility mean
  double phi = 0.98;
  double sigma2 = 0.01;
  std::vector<bool> sv;        // n+r flags; empty means all on
  Index burn_in = 100;
  int max_tries = 1000;
  double max_radius = 0.999;
};

struct SimulatedData {
  MatrixXd y;            // (T+p)×n, the first p rows are presample lags
  ParamDraw truth;
  LatentStates states;   // T rows, aligned with y.bottomRows(T)
  int resimulations = 0; // rejected coefficient draws
};

inline void validate(const DgpConfig& c) {
  if (c.n < 1 || c.p < 1 || c.r < 0 || c.T < 1) throw ConfigError("DGP dimensions must be positive");
  if (!(c.theta > 0.0)) throw ConfigError("theta must be positive");
  if (!(std::abs(c.phi) < 1.0)) throw ConfigError("phi must be inside (-1, 1)");
  if (!(c.sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
  if (!c.sv.empty() && static_cast<Index>(c.sv.size()) != c.n + c.r)
    throw DimensionMismatch("sv flags need n+r entries");
}

/// Draw VAR coefficients until the companion matrix is stable.
inline MatrixXd draw_stable_coefficients(const DgpConfig& c, RandomSource& rng, int& rejected) {
  const Index n = c.n, p = c.p, k = n * p + 1;
  for (int attempt = 0; attempt < c.max_tries; ++attempt) {
    MatrixXd coef(k, n);
    for (Index i = 0; i < n; ++i) {
      coef(0, i) = rng.uniform(-10.0, 10.0);
      for (Index j = 0; j < n; ++j) coef(1 + j, i) = i == j ? rng.uniform(0.0, 0.5) : rng.uniform(-0.2, 0.2);
      for (Index l = 2; l <= p; ++l)
        for (Index j = 0; j < n; ++j) coef(1 + (l - 1) * n + j, i) = rng.normal(0.0, 0.1 / static_cast<double>(l));
    }
    ParamDraw probe;
    probe.coef = coef;
    probe.L = MatrixXd::Zero(n, 0);
    if (companion_form(probe).spectral_radius() < c.max_radius) return coef;
    ++rejected;
  }
  throw MaxResimulations("no stable coefficient draw in " + std::to_string(c.max_tries) + " tries");
}

inline SimulatedData generate_dataset(const DgpConfig& cfg, RandomSource& rng) {
  validate(cfg);
  const Index n = cfg.n, r = cfg.r, m = n + r, p = cfg.p;
  SimulatedData out;
  ParamDraw& th = out.truth;
  th.coef = draw_stable_coefficients(cfg, rng, out.resimulations);
  th.L.resize(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < r; ++j) th.L(i, j) = rng.normal();
  th.mu = VectorXd::Constant(n, cfg.mu);
  th.phi = VectorXd::Constant(m, cfg.phi);
  th.sigma2 = VectorXd::Constant(m, cfg.sigma2);
  std::vector<bool> sv = cfg.sv.empty() ? std::vector<bool>(static_cast<std::size_t>(m), true) : cfg.sv;

  const Index total = cfg.burn_in + p + cfg.T;
  MatrixXd h(total, m), f(total, r), y(total, n);
  for (Index i = 0; i < m; ++i) {
    const double mean = i < n ? cfg.mu : 0.0;
    if (!sv[static_cast<std::size_t>(i)]) {
      // Homoskedastic series: log-variance fixed at zero.
      h.col(i).setZero();
      continue;
    }
    h(0, i) = mean + std::sqrt(cfg.sigma2 / (1.0 - cfg.phi * cfg.phi)) * rng.normal();
    for (Index t = 1; t < total; ++t)
      h(t, i) = mean + cfg.phi * (h(t - 1, i) - mean) + std::sqrt(cfg.sigma2) * rng.normal();
  }
  const auto A = lag_matrices(th);
  const VectorXd start = var_mean(th);
  const double idio_scale = std::sqrt(cfg.theta);
  for (Index t = 0; t < total; ++t) {
    for (Index j = 0; j < r; ++j) f(t, j) = std::exp(0.5 * h(t, n + j)) * rng.normal();
    VectorXd e = r > 0 ? VectorXd(th.L * f.row(t).transpose()) : VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) e[i] += idio_scale * std::exp(0.5 * h(t, i)) * rng.normal();
    VectorXd yt = th.intercept() + e;
    for (Index l = 1; l <= p; ++l)
      yt += A[static_cast<std::size_t>(l - 1)] * (t - l >= 0 ? VectorXd(y.row(t - l).transpose()) : start);
    y.row(t) = yt.transpose();
  }
  out.y = y.bottomRows(cfg.T + p);
  out.states.h = h.bottomRows(cfg.T);
  out.states.f = f.bottomRows(cfg.T);
  // With theta != 1 the idiosyncratic variance is theta·exp(h); fold it into
  // the reported truth so it matches the estimated model's parameterization.
  if (cfg.theta != 1.0) out.states.h.leftCols(n).array() += std::log(cfg.theta);
  if (cfg.theta != 1.0) th.mu.array() += std::log(cfg.theta);
  return out;
}

// ---------------------------------------------------------------------------
// Selection experiment

struct SelectionCell {
  Index n = 15;
  double theta = 3.0;
  Index r_true = 3;
  Index T = 300;
};

struct SelectionCellResult {
  SelectionCell cell;
  std::vector<Index> candidates;
  std::vector<int> counts;        // times each candidate ranked first
  std::vector<Index> selected;    // per successful replication
  std::vector<std::vector<CandidateResult>> rankings;  // full ranking per successful replication
  int failures = 0;
  std::vector<std::string> errors;

  double frequency(Index r) const {
    const int ok = static_cast<int>(selected.size());
    for (std::size_t c = 0; c < candidates.size(); ++c)
      if (candidates[c] == r) return ok == 0 ? 0.0 : static_cast<double>(counts[c]) / ok;
    return 0.0;
  }
};

struct ExperimentSettings {
  // One lag keeps the importance family small enough for n=15 panels.
  Index p = 1;
  int replications = 10;
  std::vector<Index> candidates{1, 2, 3, 4, 5, 6};
  SelectionSettings selection;
  std::uint64_t seed = 2024;
};

inline SelectionCellResult run_selection_cell(const SelectionCell& cell, const ExperimentSettings& es) {
  SelectionCellResult res;
  res.cell = cell;
  res.candidates = es.candidates;
  res.counts.assign(es.candidates.size(), 0);
  const RandomSource base(es.seed);
  for (int rep = 0; rep < es.replications; ++rep) {
    try {
      RandomSource rng = base.split(static_cast<std::uint64_t>(rep));
      DgpConfig dgp;
      dgp.n = cell.n;
      dgp.p = es.p;
      dgp.r = cell.r_true;
      dgp.T = cell.T;
      dgp.theta = cell.theta;
      const auto sim = generate_dataset(dgp, rng);
      SelectionSettings ss = es.selection;
      ss.mcmc.seed = es.seed * 1000003ULL + static_cast<std::uint64_t>(rep);
      const auto ranking = select_factor_count(sim.y, es.p, es.candidates, ss);
      if (ranking.front().failed) throw NumericalError("every candidate failed: " + ranking.front().error);
      const Index best = ranking.front().r;
      res.selected.push_back(best);
      res.rankings.push_back(ranking);
      for (std::size_t c = 0; c < es.candidates.size(); ++c)
        if (es.candidates[c] == best) ++res.counts[c];
    } catch (const std::exception& e) {
      ++res.failures;
      res.errors.push_back(e.what());
    }
  }
  return res;
}

inline std::vector<SelectionCellResult> selection_experiment(const std::vector<SelectionCell>& grid,
                                                             const ExperimentSettings& es) {
  if (grid.empty()) throw ConfigError("empty experiment grid");
  std::vector<SelectionCellResult> out;
  for (const auto& c : grid) out.push_back(run_selection_cell(c, es));
  return out;
}

}  // namespace fsvar
