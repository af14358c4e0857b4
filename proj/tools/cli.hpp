#pragma once

// Command-line front end. Every setting lives in RunConfig; a JSON file given
// with --config fills it first, then command-line flags override. One field
// table drives the JSON keys, the flags (underscores become dashes), and the
// config echo in each run manifest.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsvar/chain_io.hpp"
#include "fsvar/fsvar.hpp"
#include "fsvar/io.hpp"

namespace fsvar::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline const std::vector<std::string> kCommands{"simulate", "estimate", "select-factors", "ml",
                                                "irf",      "fevd",     "hd"};

struct RunConfig {
  std::string command;
  std::string config;
  // inputs and outputs
  std::string data, signs, chain, output_dir;
  bool labels = false;
  // model
  Index p = 4;
  Index r = -1;  // -1: from the sign file, else 1 (3 for simulate)
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: all cores
  // sampler
  Index burn_in = 1000, draws = 5000, thin = 1;
  bool reduced_form = false;
  // prior
  double kappa1 = 0.04, kappa2 = 0.0016, intercept_scale = 100.0;
  std::string data_kind = "growth";
  double mu_var = 10.0, idio_share = 0.1, phi_mean = 0.95, phi_var = 1.0;
  double sigma2_shape = 5.0, sigma2_scale = 0.04, loading_var = 1.0;
  // marginal likelihood
  int R1_start = 10, R1_cap = 640, R2 = 200;
  std::string family = "full", hessian = "em";
  bool allow_degenerate = false, keep_weights = false;
  std::vector<Index> candidates{1, 2, 3, 4, 5, 6};
  // structural output
  Index horizon = 20, time = -1;  // time: 0-based sample row, -1 for the last
  std::vector<double> quantiles{0.05, 0.16, 0.5, 0.84, 0.95};
  bool draw_level = false;
  // simulate
  Index n = 10, T = 500, sim_burn_in = 100;
  double theta = 1.0, sim_mu = 0.0, sim_phi = 0.98, sim_sigma2 = 0.01;
  std::vector<int> sv;
};

template <class C, class F>
void visit_fields(C& c, F&& f) {
  f("data", c.data, "data CSV: header row, one numeric column per variable");
  f("labels", c.labels, "first data column holds row labels (dates)");
  f("signs", c.signs, "sign-restriction CSV, n rows by r columns");
  f("chain", c.chain, "chain directory written by estimate");
  f("output_dir", c.output_dir, "output directory (default $FSVAR_OUTPUT_DIR, else ./fsvar_out)");
  f("p", c.p, "lag order");
  f("r", c.r, "number of factors (-1: from the sign file)");
  f("seed", c.seed, "random seed");
  f("threads", c.threads, "worker threads (0: all cores)");
  f("burn_in", c.burn_in, "burn-in sweeps");
  f("draws", c.draws, "stored draws");
  f("thin", c.thin, "keep every thin-th sweep");
  f("reduced_form", c.reduced_form, "allow loadings that are not point-identified");
  f("kappa1", c.kappa1, "own-lag shrinkage");
  f("kappa2", c.kappa2, "cross-lag shrinkage");
  f("intercept_scale", c.intercept_scale, "intercept prior variance as a multiple of the AR residual variance");
  f("data_kind", c.data_kind, "growth | level (prior mean of own first lag 0 or 1)");
  f("mu_var", c.mu_var, "prior variance of idiosyncratic log-volatility levels");
  f("idio_share", c.idio_share, "prior mean of exp(mu) as a share of the sample variance");
  f("phi_mean", c.phi_mean, "prior mean of volatility persistence");
  f("phi_var", c.phi_var, "prior variance of volatility persistence");
  f("sigma2_shape", c.sigma2_shape, "inverse-gamma shape for volatility innovations");
  f("sigma2_scale", c.sigma2_scale, "inverse-gamma scale for volatility innovations");
  f("loading_var", c.loading_var, "prior variance of loadings");
  f("R1_start", c.R1_start, "initial inner importance sample size");
  f("R1_cap", c.R1_cap, "largest inner importance sample size");
  f("R2", c.R2, "outer importance sample size");
  f("family", c.family, "importance family: full | per_equation | joint_coef | diagonal");
  f("hessian", c.hessian, "precision of the inner importance density: em | direct");
  f("allow_degenerate", c.allow_degenerate, "report marginal likelihoods even when ESS < 2");
  f("keep_weights", c.keep_weights, "write the outer log weights");
  f("candidates", c.candidates, "factor counts compared by select-factors");
  f("horizon", c.horizon, "impulse-response / variance-decomposition horizon");
  f("time", c.time, "reference sample row for volatilities (-1: last)");
  f("quantiles", c.quantiles, "posterior quantiles in summaries");
  f("draw_level", c.draw_level, "also write draw-level CSV");
  f("n", c.n, "simulate: number of variables");
  f("T", c.T, "simulate: sample length");
  f("theta", c.theta, "simulate: idiosyncratic variance multiplier");
  f("sim_mu", c.sim_mu, "simulate: idiosyncratic log-volatility mean");
  f("sim_phi", c.sim_phi, "simulate: volatility persistence");
  f("sim_sigma2", c.sim_sigma2, "simulate: volatility innovation variance");
  f("sim_burn_in", c.sim_burn_in, "simulate: discarded initial periods");
  f("sv", c.sv, "simulate: n+r flags, 1 for stochastic volatility, 0 for constant");
}

inline void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  std::set<std::string> known;
  visit_fields(cfg, [&](const char* key, auto& field, const char*) {
    known.insert(key);
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  });
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
}

inline json config_echo(const RunConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  visit_fields(cfg, [&](const char* key, const auto& field, const char*) { j[key] = field; });
  return j;
}

inline std::string dashed(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

inline void build_app(CLI::App& app, RunConfig& cfg) {
  app.add_option("command", cfg.command, "simulate | estimate | select-factors | ml | irf | fevd | hd")
      ->required()
      ->check(CLI::IsMember(kCommands));
  app.add_option("--config", cfg.config, "JSON config; flags given on the command line win");
  visit_fields(cfg, [&](const char* key, auto& field, const char* help) {
    using T = std::remove_reference_t<decltype(field)>;
    const std::string name = "--" + dashed(key);
    if constexpr (std::is_same_v<T, bool>) {
      app.add_flag(name + ",!--no-" + dashed(key), field, help);
    } else if constexpr (std::is_same_v<T, std::vector<Index>> || std::is_same_v<T, std::vector<double>> ||
                         std::is_same_v<T, std::vector<int>>) {
      app.add_option(name, field, help)->delimiter(',');
    } else {
      app.add_option(name, field, help);
    }
  });
}

// ---------------------------------------------------------------------------
// Validation: everything checkable without reading data happens here, before
// any output is written.

inline FamilyShape family_shape(const std::string& s) {
  if (s == "full") return FamilyShape::full;
  if (s == "per_equation") return FamilyShape::per_equation;
  if (s == "joint_coef") return FamilyShape::joint_coef;
  if (s == "diagonal") return FamilyShape::diagonal;
  throw ConfigError("unknown importance family '" + s + "'");
}

inline HessianRoute hessian_route(const std::string& s) {
  if (s == "em") return HessianRoute::em;
  if (s == "direct") return HessianRoute::direct;
  throw ConfigError("unknown hessian route '" + s + "'");
}

inline DataKind data_kind(const std::string& s) {
  if (s == "growth") return DataKind::growth;
  if (s == "level") return DataKind::level;
  throw ConfigError("data_kind must be growth or level");
}

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.p >= 1, "p must be >= 1");
  need(c.r >= -1, "r must be >= 0");
  need(c.burn_in >= 0, "burn_in must be >= 0");
  need(c.draws >= 1, "draws must be >= 1");
  need(c.thin >= 1, "thin must be >= 1");
  need(c.kappa1 > 0.0 && c.kappa2 > 0.0, "kappa1 and kappa2 must be positive");
  need(c.intercept_scale > 0.0, "intercept_scale must be positive");
  data_kind(c.data_kind);
  need(c.mu_var > 0.0 && c.idio_share > 0.0 && c.phi_var > 0.0 && c.loading_var > 0.0,
       "prior variances and idio_share must be positive");
  need(std::abs(c.phi_mean) < 1.0, "phi_mean must lie in (-1, 1)");
  need(c.sigma2_shape > 0.0 && c.sigma2_scale > 0.0, "sigma2 prior shape and scale must be positive");
  need(c.R1_start >= 2 && c.R1_cap >= c.R1_start, "need 2 <= R1_start <= R1_cap");
  need(c.R2 >= 2, "R2 must be >= 2");
  family_shape(c.family);
  hessian_route(c.hessian);
  need(c.horizon >= 0, "horizon must be >= 0");
  need(c.time >= -1, "time must be >= 0, or -1 for the last row");
  need(!c.quantiles.empty(), "quantiles must not be empty");
  for (double q : c.quantiles) need(q >= 0.0 && q <= 1.0, "quantiles must lie in [0, 1]");

  const std::string& cmd = c.command;
  if (cmd == "simulate") {
    DgpConfig d;
    d.n = c.n;
    d.p = c.p;
    d.r = c.r < 0 ? 3 : c.r;
    d.T = c.T;
    d.theta = c.theta;
    d.phi = c.sim_phi;
    d.sigma2 = c.sim_sigma2;
    d.burn_in = c.sim_burn_in;
    for (int v : c.sv) d.sv.push_back(v != 0);
    need(c.sim_burn_in >= 0, "sim_burn_in must be >= 0");
    fsvar::validate(d);
    return;
  }
  if (cmd == "select-factors") {
    require_file(c.data, "data");
    need(!c.candidates.empty(), "candidates must not be empty");
    for (Index r : c.candidates) need(r >= 0, "candidates must be >= 0");
    return;
  }
  if (cmd == "fevd") need(c.horizon >= 1, "fevd needs horizon >= 1");
  const bool uses_chain = cmd == "irf" || cmd == "fevd" || cmd == "hd" || cmd == "ml";
  if (uses_chain && !c.chain.empty()) {
    need(fs::is_regular_file(fs::path(c.chain) / "manifest.json"), "no chain manifest in " + c.chain);
    if (cmd == "hd" || cmd == "ml") require_file(c.data, "data");
    if (!c.data.empty()) require_file(c.data, "data");
    return;
  }
  require_file(c.data, "data");
  if (!c.signs.empty()) require_file(c.signs, "sign file");
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces

struct Problem {
  io::Dataset data;
  VarData vd;
  ModelSpec spec;
  std::vector<std::string> factors;
  json inputs;
};

inline MinnesotaOptions minnesota_options(const RunConfig& c) {
  MinnesotaOptions m;
  m.own_shrinkage = c.kappa1;
  m.cross_shrinkage = c.kappa2;
  m.intercept_scale = c.intercept_scale;
  m.kind = data_kind(c.data_kind);
  return m;
}

inline SvPriorOptions sv_options(const RunConfig& c) {
  SvPriorOptions s;
  s.mu_var = c.mu_var;
  s.idio_share = c.idio_share;
  s.phi_mean = c.phi_mean;
  s.phi_var = c.phi_var;
  s.sigma2_shape = c.sigma2_shape;
  s.sigma2_scale = c.sigma2_scale;
  s.loading_var = c.loading_var;
  return s;
}

inline McmcSettings mcmc_settings(const RunConfig& c) {
  McmcSettings m;
  m.burn_in = c.burn_in;
  m.draws = c.draws;
  m.thin = c.thin;
  m.seed = c.seed;
  m.reduced_form = c.reduced_form;
  m.store_states = true;
  return m;
}

inline MarginalLikelihoodOptions ml_options(const RunConfig& c) {
  MarginalLikelihoodOptions o;
  o.R1_start = c.R1_start;
  o.R1_cap = c.R1_cap;
  o.R2 = c.R2;
  o.shape = family_shape(c.family);
  o.route = hessian_route(c.hessian);
  o.threads = c.threads == 0 ? default_thread_count() : c.threads;
  o.keep_log_weights = c.keep_weights;
  o.throw_on_degenerate = !c.allow_degenerate;
  return o;
}

inline json input_record(const std::string& path) {
  return json{{"path", path}, {"fnv1a64", file_digest(path)}};
}

inline Problem load_problem(const RunConfig& c, bool need_signs) {
  Problem pb;
  pb.data = io::ingest_csv(c.data, c.labels);
  pb.inputs["data"] = input_record(c.data);
  const Index n = pb.data.values.cols();
  Index r = c.r;
  SignMatrix signs;
  if (!c.signs.empty()) {
    const auto table = io::read_sign_file(c.signs);
    pb.inputs["signs"] = input_record(c.signs);
    if (table.signs.rows() != n)
      throw ConfigError("sign file has " + std::to_string(table.signs.rows()) + " rows, data has " +
                        std::to_string(n) + " variables");
    if (!table.variable_names.empty() && table.variable_names != pb.data.names)
      throw ConfigError("sign file row labels do not match the data header");
    if (r >= 0 && r != table.signs.cols())
      throw ConfigError("r = " + std::to_string(r) + " but the sign file has " +
                        std::to_string(table.signs.cols()) + " columns");
    r = table.signs.cols();
    signs = table.signs;
    pb.factors = table.shock_names.empty() ? default_factor_names(r) : table.shock_names;
  } else {
    if (r < 0) r = 1;
    if (need_signs && r > 0 && !c.reduced_form)
      throw ConfigError("no sign restrictions given: pass --signs, or --reduced-form to accept unidentified loadings");
    signs = SignMatrix::unrestricted(n, r);
    pb.factors = default_factor_names(r);
  }
  pb.vd = make_var_data(pb.data.values, c.p);
  pb.spec.n = n;
  pb.spec.p = c.p;
  pb.spec.r = r;
  pb.spec.signs = signs;
  pb.spec.prior = default_prior(pb.data.values, c.p, r, minnesota_options(c), sv_options(c));
  return pb;
}

inline fs::path output_dir(const RunConfig& c) {
  if (!c.output_dir.empty()) return c.output_dir;
  if (const char* env = std::getenv("FSVAR_OUTPUT_DIR"); env && *env) return env;
  return "fsvar_out";
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

inline json base_manifest(const RunConfig& c, const json& inputs) {
  json m;
  m["tool"] = "fsvar";
  m["library_version"] = kLibraryVersion;
  m["command"] = c.command;
  m["seed"] = c.seed;
  m["inputs"] = inputs.is_null() ? json::object() : inputs;
  m["config"] = config_echo(c);
  return m;
}

// Quantile table: one row per cell, values across draws.
class Summary {
 public:
  Summary(std::vector<std::string> key_columns, std::size_t cells)
      : keys_(std::move(key_columns)), values_(cells) {}
  void add(std::size_t cell, double v) { values_[cell].push_back(v); }
  std::size_t cells() const { return values_.size(); }

  template <class KeyWriter>
  void write(const fs::path& path, const std::vector<double>& quantiles, KeyWriter&& key) const {
    std::ofstream out(path, std::ios::binary);
    for (const auto& k : keys_) out << k << ',';
    out << "mean";
    for (double q : quantiles) out << ",q" << format_double(q);
    out << '\n';
    for (std::size_t c = 0; c < values_.size(); ++c) {
      const auto& v = values_[c];
      if (v.empty()) continue;
      key(out, c);
      double mean = 0.0;
      for (double x : v) mean += x;
      out << ',' << format_double(mean / static_cast<double>(v.size()));
      for (double q : quantiles) out << ',' << format_double(empirical_quantile(v, q));
      out << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
  }

 private:
  std::vector<std::string> keys_;
  std::vector<std::vector<double>> values_;
};

inline std::string csv(const std::string& s) { return io::quote_csv(s); }

// A chain either loaded from --chain or estimated now.
struct ChainSource {
  ChainBundle bundle;
  std::optional<Problem> problem;
  json inputs;
};

inline ChainSource obtain_chain(const RunConfig& c, bool need_data) {
  ChainSource src;
  if (!c.chain.empty()) {
    src.bundle = read_chain(c.chain);
    src.inputs["chain"] = {{"path", c.chain}, {"manifest_fnv1a64", file_digest((fs::path(c.chain) / "manifest.json").string())}};
    if (need_data) {
      RunConfig dc = c;
      dc.signs.clear();
      dc.r = src.bundle.chain.r;
      dc.p = src.bundle.chain.p;
      dc.reduced_form = true;
      src.problem = load_problem(dc, false);
      if (src.problem->vd.n() != src.bundle.chain.n || src.problem->vd.T() != src.bundle.chain.T)
        throw ConfigError("data do not match the chain's dimensions");
      src.inputs["data"] = src.problem->inputs["data"];
    }
    return src;
  }
  src.problem = load_problem(c, true);
  src.inputs = src.problem->inputs;
  src.bundle.chain = run_chain(src.problem->vd, src.problem->spec, mcmc_settings(c));
  src.bundle.variables = src.problem->data.names;
  src.bundle.factors = src.problem->factors;
  return src;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(const RunConfig& c, const fs::path& out) {
  DgpConfig d;
  d.n = c.n;
  d.p = c.p;
  d.r = c.r < 0 ? 3 : c.r;
  d.T = c.T;
  d.theta = c.theta;
  d.mu = c.sim_mu;
  d.phi = c.sim_phi;
  d.sigma2 = c.sim_sigma2;
  d.burn_in = c.sim_burn_in;
  for (int v : c.sv) d.sv.push_back(v != 0);
  RandomSource rng(c.seed);
  const auto sim = generate_dataset(d, rng);
  fs::create_directories(out);
  std::vector<std::string> names;
  for (Index i = 0; i < d.n; ++i) names.push_back("y" + std::to_string(i + 1));
  {
    std::ofstream f(out / "data.csv", std::ios::binary);
    for (std::size_t i = 0; i < names.size(); ++i) f << (i ? "," : "") << names[i];
    f << '\n';
    for (Index t = 0; t < sim.y.rows(); ++t) {
      for (Index i = 0; i < d.n; ++i) f << (i ? "," : "") << format_double(sim.y(t, i));
      f << '\n';
    }
  }
  const auto facs = default_factor_names(d.r);
  {
    std::ofstream f(out / "states.csv", std::ios::binary);
    f << "t";
    for (const auto& v : names) f << ",h[" << v << "]";
    for (const auto& v : facs) f << ",h[" << v << "]";
    for (const auto& v : facs) f << ",f[" << v << "]";
    f << '\n';
    for (Index t = 0; t < sim.states.h.rows(); ++t) {
      f << t;
      for (Index i = 0; i < sim.states.h.cols(); ++i) f << ',' << format_double(sim.states.h(t, i));
      for (Index j = 0; j < d.r; ++j) f << ',' << format_double(sim.states.f(t, j));
      f << '\n';
    }
  }
  auto mat = [](const MatrixXd& M) {
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(M.cols()));
      for (Index j = 0; j < M.cols(); ++j) row[static_cast<std::size_t>(j)] = M(i, j);
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json truth;
  truth["variables"] = names;
  truth["factors"] = facs;
  truth["coef_layout"] = "k x n; column i is (a0_i, A_1[i,:], ..., A_p[i,:])";
  truth["coef"] = mat(sim.truth.coef);
  truth["L"] = mat(sim.truth.L);
  truth["mu"] = vec(sim.truth.mu);
  truth["phi"] = vec(sim.truth.phi);
  truth["sigma2"] = vec(sim.truth.sigma2);
  truth["resimulations"] = sim.resimulations;
  truth["presample_rows"] = d.p;
  write_json(out / "truth.json", truth);
  json m = base_manifest(c, json::object());
  m["outputs"] = {"data.csv", "states.csv", "truth.json"};
  write_json(out / "manifest.json", m);
  return 0;
}

inline int cmd_estimate(const RunConfig& c, const fs::path& out) {
  Problem pb = load_problem(c, true);
  const auto model_rep = validate_model_spec(pb.spec, pb.data.values.rows());
  if (!model_rep.ok) throw ConfigError(model_rep.messages.front());
  const auto id = validate_point_identification(pb.spec.signs);
  const McmcChain chain = run_chain(pb.vd, pb.spec, mcmc_settings(c));

  fs::create_directories(out);
  json run = base_manifest(c, pb.inputs);
  write_chain(out / "chain", chain, pb.data.names, pb.factors, run);

  const auto cols = param_columns(pb.data.names, pb.factors, c.p);
  const Index n = pb.spec.n, r = pb.spec.r, m = n + r;
  Summary params({"parameter"}, cols.size() - 1);
  for (const auto& d : chain.draws) {
    std::size_t o = 0;
    for (Index i = 0; i < n; ++i)
      for (Index q = 0; q < d.coef.rows(); ++q) params.add(o++, d.coef(q, i));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < r; ++j) params.add(o++, d.L(i, j));
    for (Index i = 0; i < n; ++i) params.add(o++, d.mu[i]);
    for (Index i = 0; i < m; ++i) params.add(o++, d.phi[i]);
    for (Index i = 0; i < m; ++i) params.add(o++, d.sigma2[i]);
  }
  params.write(out / "params_summary.csv", c.quantiles,
               [&](std::ostream& os, std::size_t cell) { os << csv(cols[cell + 1]); });

  const Index T = chain.T;
  Summary vol({"row", "series"}, static_cast<std::size_t>(T * m));
  for (const auto& st : chain.states)
    for (Index t = 0; t < T; ++t)
      for (Index i = 0; i < m; ++i) vol.add(static_cast<std::size_t>(t * m + i), st.h(t, i));
  std::vector<std::string> series = pb.data.names;
  series.insert(series.end(), pb.factors.begin(), pb.factors.end());
  vol.write(out / "log_volatility.csv", c.quantiles, [&](std::ostream& os, std::size_t cell) {
    os << static_cast<Index>(cell) / m << ',' << csv(series[cell % static_cast<std::size_t>(m)]);
  });

  json man = run;
  man["identification"] = {{"point_identified", id.ok}, {"messages", id.messages}};
  man["model_warnings"] = model_rep.messages;
  if (r > 0) {
    const auto rank = check_loadings_rank_heuristic(chain.posterior_mean().L);
    man["loadings_rank_check"] = {{"ok", rank.ok}, {"messages", rank.messages}};
  }
  if (!id.ok) man["interpretation"] = "reduced form only: factors and loadings are not point-identified";
  std::vector<double> acc(chain.phi_acceptance.data(), chain.phi_acceptance.data() + chain.phi_acceptance.size());
  man["phi_acceptance"] = acc;
  man["inexact_loading_draws"] = chain.inexact_loading_draws;
  man["outputs"] = {"chain/manifest.json", "chain/params.csv", "chain/states.bin", "params_summary.csv",
                    "log_volatility.csv"};
  write_json(out / "manifest.json", man);
  return 0;
}

inline json ml_json(const MarginalLikelihoodResult& res) {
  int lo = res.R1_used.empty() ? 0 : res.R1_used.front(), hi = lo;
  for (int v : res.R1_used) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return json{{"log_ml", res.log_estimate},       {"standard_error", res.standard_error},
              {"ess", res.ess},                   {"R2", res.R2},
              {"R1_min", lo},                     {"R1_max", hi},
              {"degenerate_inner", res.degenerate_inner}, {"hessian_fallbacks", res.hessian_fallbacks}};
}

inline int cmd_ml(const RunConfig& c, const fs::path& out) {
  ChainSource src = obtain_chain(c, true);
  ModelSpec spec = src.problem->spec;
  if (!c.chain.empty()) {
    // Prior and signs must be those the chain was drawn under.
    if (!c.signs.empty()) {
      const auto table = io::read_sign_file(c.signs);
      spec.signs = table.signs;
      src.inputs["signs"] = input_record(c.signs);
    } else if (!src.bundle.chain.settings.reduced_form && spec.r > 0) {
      throw ConfigError("pass the sign file the chain was estimated with");
    }
    if (spec.signs.rows() != spec.n || spec.signs.cols() != spec.r)
      throw ConfigError("sign file does not match the chain's dimensions");
  }
  RandomSource rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto res = marginal_likelihood(src.problem->vd, spec, src.bundle.chain, rng, ml_options(c));
  fs::create_directories(out);
  json m = base_manifest(c, src.inputs);
  m["result"] = ml_json(res);
  std::vector<std::string> outputs{"ml.json"};
  write_json(out / "ml.json", m["result"]);
  if (c.keep_weights) {
    std::ofstream f(out / "log_weights.csv", std::ios::binary);
    f << "draw,log_weight,R1\n";
    for (std::size_t s = 0; s < res.log_weights.size(); ++s)
      f << s << ',' << format_double(res.log_weights[s]) << ',' << res.R1_used[s] << '\n';
    outputs.push_back("log_weights.csv");
  }
  m["outputs"] = outputs;
  write_json(out / "manifest.json", m);
  return 0;
}

inline int cmd_select(const RunConfig& c, const fs::path& out) {
  const auto data = io::ingest_csv(c.data, c.labels);
  SelectionSettings s;
  s.mcmc = mcmc_settings(c);
  s.ml = ml_options(c);
  s.minnesota = minnesota_options(c);
  s.sv = sv_options(c);
  const auto ranking = select_factor_count(data.values, c.p, c.candidates, s);
  fs::create_directories(out);
  std::ofstream f(out / "ranking.csv", std::ios::binary);
  f << "rank,r,log_ml,standard_error,ess,failed,error\n";
  json rows = json::array();
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& cr = ranking[i];
    f << i + 1 << ',' << cr.r << ',' << format_double(cr.log_ml) << ',' << format_double(cr.standard_error) << ','
      << format_double(cr.ess) << ',' << (cr.failed ? 1 : 0) << ',' << csv(cr.error) << '\n';
    rows.push_back({{"rank", i + 1},
                    {"r", cr.r},
                    {"log_ml", cr.failed ? json(nullptr) : json(cr.log_ml)},
                    {"standard_error", cr.failed ? json(nullptr) : json(cr.standard_error)},
                    {"ess", cr.ess},
                    {"failed", cr.failed},
                    {"error", cr.error}});
  }
  json m = base_manifest(c, json{{"data", input_record(c.data)}});
  m["ranking"] = rows;
  m["outputs"] = {"ranking.csv"};
  write_json(out / "manifest.json", m);
  return 0;
}

inline Index reference_row(const RunConfig& c, Index T) {
  const Index t = c.time < 0 ? T - 1 : c.time;
  if (t >= T) throw ConfigError("time " + std::to_string(t) + " is outside the sample (T = " + std::to_string(T) + ")");
  return t;
}

inline void require_states(const McmcChain& chain) {
  if (chain.r < 1) throw ConfigError("structural analysis needs at least one factor");
  if (chain.states.size() != chain.draws.size()) throw ConfigError("chain has no stored latent states");
}

inline int cmd_irf(const RunConfig& c, const fs::path& out) {
  const ChainSource src = obtain_chain(c, false);
  const McmcChain& chain = src.bundle.chain;
  require_states(chain);
  const Index n = chain.n, r = chain.r, H = c.horizon, t = reference_row(c, chain.T);
  const auto& vars = src.bundle.variables;
  const auto& facs = src.bundle.factors;
  Summary sum({"horizon", "variable", "shock"}, static_cast<std::size_t>((H + 1) * n * r));
  fs::create_directories(out);
  std::ofstream draws_out;
  if (c.draw_level) {
    draws_out.open(out / "irf_draws.csv", std::ios::binary);
    draws_out << "draw,horizon,variable,shock,value\n";
  }
  for (std::size_t s = 0; s < chain.draws.size(); ++s) {
    const auto irf = impulse_responses(chain.draws[s], chain.states[s].h, t, H);
    for (Index l = 0; l <= H; ++l)
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < r; ++j) {
          const double v = irf.theta[static_cast<std::size_t>(l)](i, j);
          sum.add(static_cast<std::size_t>((l * n + i) * r + j), v);
          if (c.draw_level)
            draws_out << s << ',' << l << ',' << csv(vars[static_cast<std::size_t>(i)]) << ','
                      << csv(facs[static_cast<std::size_t>(j)]) << ',' << format_double(v) << '\n';
        }
  }
  sum.write(out / "irf.csv", c.quantiles, [&](std::ostream& os, std::size_t cell) {
    const auto j = cell % static_cast<std::size_t>(r), i = (cell / static_cast<std::size_t>(r)) % static_cast<std::size_t>(n);
    os << cell / static_cast<std::size_t>(r * n) << ',' << csv(vars[i]) << ',' << csv(facs[j]);
  });
  json m = base_manifest(c, src.inputs);
  m["reference_row"] = t;
  m["draws"] = chain.draws.size();
  m["outputs"] = c.draw_level ? json{"irf.csv", "irf_draws.csv"} : json{"irf.csv"};
  write_json(out / "manifest.json", m);
  return 0;
}

inline int cmd_fevd(const RunConfig& c, const fs::path& out) {
  const ChainSource src = obtain_chain(c, false);
  const McmcChain& chain = src.bundle.chain;
  require_states(chain);
  const Index n = chain.n, r = chain.r, H = c.horizon, t = reference_row(c, chain.T);
  std::vector<std::string> comps = src.bundle.factors;
  comps.push_back("idiosyncratic");
  const auto& vars = src.bundle.variables;
  const Index K = r + 1;
  Summary sum({"horizon", "variable", "component"}, static_cast<std::size_t>(H * n * K));
  fs::create_directories(out);
  std::ofstream draws_out;
  if (c.draw_level) {
    draws_out.open(out / "fevd_draws.csv", std::ios::binary);
    draws_out << "draw,horizon,variable,component,share\n";
  }
  for (std::size_t s = 0; s < chain.draws.size(); ++s) {
    const auto fv = fevd(chain.draws[s], chain.states[s].h, t, H);
    for (Index l = 1; l <= H; ++l)
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < K; ++j) {
          const double v = fv.shares[static_cast<std::size_t>(l - 1)](i, j);
          sum.add(static_cast<std::size_t>(((l - 1) * n + i) * K + j), v);
          if (c.draw_level)
            draws_out << s << ',' << l << ',' << csv(vars[static_cast<std::size_t>(i)]) << ','
                      << csv(comps[static_cast<std::size_t>(j)]) << ',' << format_double(v) << '\n';
        }
  }
  sum.write(out / "fevd.csv", c.quantiles, [&](std::ostream& os, std::size_t cell) {
    const auto j = cell % static_cast<std::size_t>(K), i = (cell / static_cast<std::size_t>(K)) % static_cast<std::size_t>(n);
    os << cell / static_cast<std::size_t>(K * n) + 1 << ',' << csv(vars[i]) << ',' << csv(comps[j]);
  });
  json m = base_manifest(c, src.inputs);
  m["reference_row"] = t;
  m["draws"] = chain.draws.size();
  m["outputs"] = c.draw_level ? json{"fevd.csv", "fevd_draws.csv"} : json{"fevd.csv"};
  write_json(out / "manifest.json", m);
  return 0;
}

inline int cmd_hd(const RunConfig& c, const fs::path& out) {
  const ChainSource src = obtain_chain(c, true);
  const McmcChain& chain = src.bundle.chain;
  require_states(chain);
  const VarData& vd = src.problem->vd;
  const Index n = chain.n, r = chain.r, T = chain.T, K = r + 2;
  std::vector<std::string> comps = src.bundle.factors;
  comps.push_back("idiosyncratic");
  comps.push_back("initial_condition");
  const auto& vars = src.bundle.variables;
  Summary sum({"row", "variable", "component"}, static_cast<std::size_t>(T * n * K));
  fs::create_directories(out);
  std::ofstream draws_out;
  if (c.draw_level) {
    draws_out.open(out / "hd_draws.csv", std::ios::binary);
    draws_out << "draw,row,variable,component,value\n";
  }
  Index skipped = 0;
  for (std::size_t s = 0; s < chain.draws.size(); ++s) {
    HdResult hd;
    try {
      hd = historical_decomposition(chain.draws[s], chain.states[s].f, vd);
    } catch (const NonInvertibleMean&) {
      ++skipped;
      continue;
    }
    for (Index t = 0; t < T; ++t)
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < K; ++j) {
          const double v = j < r ? hd.factor[static_cast<std::size_t>(j)](t, i)
                                 : (j == r ? hd.idiosyncratic(t, i) : -hd.gap(t, i));
          sum.add(static_cast<std::size_t>((t * n + i) * K + j), v);
          if (c.draw_level)
            draws_out << s << ',' << t << ',' << csv(vars[static_cast<std::size_t>(i)]) << ','
                      << csv(comps[static_cast<std::size_t>(j)]) << ',' << format_double(v) << '\n';
        }
  }
  if (skipped == static_cast<Index>(chain.draws.size()))
    throw NumericalError("no draw has an invertible mean; historical decomposition undefined");
  sum.write(out / "hd.csv", c.quantiles, [&](std::ostream& os, std::size_t cell) {
    const auto j = cell % static_cast<std::size_t>(K), i = (cell / static_cast<std::size_t>(K)) % static_cast<std::size_t>(n);
    os << cell / static_cast<std::size_t>(K * n) << ',' << csv(vars[i]) << ',' << csv(comps[j]);
  });
  json m = base_manifest(c, src.inputs);
  m["draws"] = chain.draws.size();
  m["skipped_draws"] = skipped;
  m["outputs"] = c.draw_level ? json{"hd.csv", "hd_draws.csv"} : json{"hd.csv"};
  write_json(out / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numerical: return 4;
  }
  return 4;
}

inline int report(std::ostream& err, const char* category, const std::string& message, int code) {
  err << json{{"error", category}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  RunConfig cfg;
  try {
    {
      RunConfig probe;
      CLI::App app("VAR with factor stochastic volatility", "fsvar");
      build_app(app, probe);
      try {
        app.parse(argc, argv);
      } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
      } catch (const CLI::ParseError& e) {
        return report(err, "config", e.what(), 2);
      }
      if (!probe.config.empty()) {
        std::ifstream in(probe.config);
        if (!in) throw ConfigError("cannot open config file " + probe.config);
        nlohmann::json j;
        try {
          in >> j;
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(std::string("config file: ") + e.what());
        }
        apply_json(cfg, j);
      }
    }
    CLI::App app("VAR with factor stochastic volatility", "fsvar");
    build_app(app, cfg);
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return report(err, "config", e.what(), 2);
    }
    validate(cfg);
    const fs::path out = output_dir(cfg);
    const std::string& cmd = cfg.command;
    if (cmd == "simulate") return cmd_simulate(cfg, out);
    if (cmd == "estimate") return cmd_estimate(cfg, out);
    if (cmd == "ml") return cmd_ml(cfg, out);
    if (cmd == "select-factors") return cmd_select(cfg, out);
    if (cmd == "irf") return cmd_irf(cfg, out);
    if (cmd == "fevd") return cmd_fevd(cfg, out);
    if (cmd == "hd") return cmd_hd(cfg, out);
    throw ConfigError("unknown command " + cmd);
  } catch (const Error& e) {
    static const char* names[] = {"config", "data", "numerical"};
    return report(err, names[static_cast<int>(e.category())], e.what(), exit_code(e.category()));
  } catch (const fs::filesystem_error& e) {
    return report(err, "data", e.what(), 3);
  } catch (const std::exception& e) {
    return report(err, "numerical", e.what(), 4);
  }
}

}  // namespace fsvar::cli
