#pragma once

// On-disk chain format (version 1). A chain directory holds:
//   manifest.json  dimensions, names, sampler settings, diagnostics, and a
//                  caller-supplied "run" object (inputs hash, seed, ...)
//   params.csv     one row per stored draw: draw index, then coefficients
//                  a0[v], A<l>[v,w] equation by equation, loadings L[v,f],
//                  mu[v], phi[s], sigma2[s] (s runs over variables then
//                  factors). Numbers use the shortest round-trip form.
//   states.bin     optional latent paths. Header: 8-byte magic "FSVSTATE",
//                  uint32 version, uint32 byte-order mark 0x01020304, then
//                  uint64 draws, T, m, r. Body: per draw h (T×m) then f (T×r),
//                  row-major float64 in host byte order.
// Files are written deterministically, so identical chains give identical
// bytes.

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsvar/error.hpp"
#include "fsvar/gibbs.hpp"
#include "fsvar/io.hpp"

namespace fsvar {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kChainFormatVersion = 1;

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

struct ChainBundle {
  McmcChain chain;
  std::vector<std::string> variables;  // n
  std::vector<std::string> factors;    // r
  nlohmann::json manifest;
};

inline std::vector<std::string> default_factor_names(Index r) {
  std::vector<std::string> out;
  for (Index j = 0; j < r; ++j) out.push_back("f" + std::to_string(j + 1));
  return out;
}

inline std::vector<std::string> param_columns(const std::vector<std::string>& vars,
                                              const std::vector<std::string>& facs, Index p) {
  std::vector<std::string> cols{"draw"};
  for (const auto& v : vars) {
    cols.push_back("a0[" + v + "]");
    for (Index l = 1; l <= p; ++l)
      for (const auto& w : vars) cols.push_back("A" + std::to_string(l) + "[" + v + "," + w + "]");
  }
  for (const auto& v : vars)
    for (const auto& f : facs) cols.push_back("L[" + v + "," + f + "]");
  for (const auto& v : vars) cols.push_back("mu[" + v + "]");
  std::vector<std::string> series = vars;
  series.insert(series.end(), facs.begin(), facs.end());
  for (const auto& s : series) cols.push_back("phi[" + s + "]");
  for (const auto& s : series) cols.push_back("sigma2[" + s + "]");
  return cols;
}

namespace detail {

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated state file");
  return v;
}

inline void put_matrix_rowmajor(std::ostream& out, const MatrixXd& M) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
  out.write(reinterpret_cast<const char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
}

inline MatrixXd get_matrix_rowmajor(std::istream& in, Index rows, Index cols) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(rows, cols);
  in.read(reinterpret_cast<char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
  if (!in) throw ParseError("truncated state file");
  return R;
}

}  // namespace detail

inline void write_chain(const std::filesystem::path& dir, const McmcChain& chain,
                        const std::vector<std::string>& variables, const std::vector<std::string>& factors,
                        const nlohmann::json& run = nlohmann::json::object()) {
  if (static_cast<Index>(variables.size()) != chain.n || static_cast<Index>(factors.size()) != chain.r)
    throw DimensionMismatch("names vs chain dimensions");
  std::filesystem::create_directories(dir);
  const Index n = chain.n, p = chain.p, r = chain.r, m = n + r;

  {
    std::ofstream out(dir / "params.csv", std::ios::binary);
    const auto cols = param_columns(variables, factors, p);
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << io::quote_csv(cols[c]);
    out << '\n';
    for (std::size_t s = 0; s < chain.draws.size(); ++s) {
      const ParamDraw& d = chain.draws[s];
      out << s;
      auto w = [&](double v) { out << ',' << format_double(v); };
      for (Index i = 0; i < n; ++i)
        for (Index q = 0; q < d.coef.rows(); ++q) w(d.coef(q, i));
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < r; ++j) w(d.L(i, j));
      for (Index i = 0; i < n; ++i) w(d.mu[i]);
      for (Index i = 0; i < m; ++i) w(d.phi[i]);
      for (Index i = 0; i < m; ++i) w(d.sigma2[i]);
      out << '\n';
    }
    if (!out) throw DataError("failed writing params.csv");
  }

  const bool with_states = !chain.states.empty();
  if (with_states) {
    std::ofstream out(dir / "states.bin", std::ios::binary);
    out.write("FSVSTATE", 8);
    detail::put(out, static_cast<std::uint32_t>(kChainFormatVersion));
    detail::put(out, static_cast<std::uint32_t>(0x01020304));
    detail::put(out, static_cast<std::uint64_t>(chain.states.size()));
    detail::put(out, static_cast<std::uint64_t>(chain.T));
    detail::put(out, static_cast<std::uint64_t>(m));
    detail::put(out, static_cast<std::uint64_t>(r));
    for (const auto& st : chain.states) {
      detail::put_matrix_rowmajor(out, st.h);
      detail::put_matrix_rowmajor(out, st.f);
    }
    if (!out) throw DataError("failed writing states.bin");
  }

  nlohmann::ordered_json man;
  man["format"] = "fsvar-chain";
  man["format_version"] = kChainFormatVersion;
  man["library_version"] = kLibraryVersion;
  man["n"] = n;
  man["p"] = p;
  man["r"] = r;
  man["T"] = chain.T;
  man["draws"] = chain.draws.size();
  man["variables"] = variables;
  man["factors"] = factors;
  man["settings"] = {{"burn_in", chain.settings.burn_in},
                     {"draws", chain.settings.draws},
                     {"thin", chain.settings.thin},
                     {"seed", chain.settings.seed},
                     {"reduced_form", chain.settings.reduced_form}};
  std::vector<double> acc(chain.phi_acceptance.data(), chain.phi_acceptance.data() + chain.phi_acceptance.size());
  man["phi_acceptance"] = acc;
  man["inexact_loading_draws"] = chain.inexact_loading_draws;
  man["files"] = {{"params", "params.csv"}, {"states", with_states ? "states.bin" : ""}};
  man["run"] = run;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << man.dump(2) << '\n';
  if (!out) throw DataError("failed writing manifest.json");
}

inline ChainBundle read_chain(const std::filesystem::path& dir) {
  ChainBundle b;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("no manifest.json in " + dir.string());
    try {
      in >> b.manifest;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest.json: ") + e.what());
    }
  }
  const auto& man = b.manifest;
  if (man.value("format", "") != "fsvar-chain") throw ParseError("not a chain manifest");
  if (man.value("format_version", 0) != kChainFormatVersion)
    throw ParseError("unsupported chain format version " + std::to_string(man.value("format_version", 0)));
  McmcChain& c = b.chain;
  try {
    c.n = man.at("n").get<Index>();
    c.p = man.at("p").get<Index>();
    c.r = man.at("r").get<Index>();
    c.T = man.at("T").get<Index>();
    b.variables = man.at("variables").get<std::vector<std::string>>();
    b.factors = man.at("factors").get<std::vector<std::string>>();
    const auto& st = man.at("settings");
    c.settings.burn_in = st.at("burn_in").get<Index>();
    c.settings.draws = st.at("draws").get<Index>();
    c.settings.thin = st.at("thin").get<Index>();
    c.settings.seed = st.at("seed").get<std::uint64_t>();
    c.settings.reduced_form = st.at("reduced_form").get<bool>();
    const auto acc = man.at("phi_acceptance").get<std::vector<double>>();
    c.phi_acceptance = Eigen::Map<const VectorXd>(acc.data(), static_cast<Index>(acc.size()));
    c.inexact_loading_draws = man.at("inexact_loading_draws").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what());
  }
  const Index n = c.n, p = c.p, r = c.r, m = n + r, k = n * p + 1;
  if (static_cast<Index>(b.variables.size()) != n || static_cast<Index>(b.factors.size()) != r)
    throw ParseError("manifest names do not match dimensions");

  {
    std::ifstream in(dir / "params.csv");
    if (!in) throw DataError("no params.csv in " + dir.string());
    std::string line;
    std::getline(in, line);
    const auto cols = param_columns(b.variables, b.factors, p);
    if (io::split_csv_line(line).size() != cols.size()) throw ParseError("params.csv header does not match manifest");
    Index row = 0;
    while (std::getline(in, line)) {
      if (io::trim(line).empty()) continue;
      ++row;
      const auto f = io::split_csv_line(line);
      if (f.size() != cols.size())
        throw ParseError("params.csv row " + std::to_string(row) + ": expected " + std::to_string(cols.size()) +
                         " fields");
      std::size_t o = 1;
      auto next = [&]() {
        const auto v = io::parse_number(f[o]);
        if (!v) throw ParseError("params.csv row " + std::to_string(row) + " column " + std::to_string(o + 1));
        ++o;
        return *v;
      };
      ParamDraw d;
      d.coef.resize(k, n);
      d.L.resize(n, r);
      d.mu.resize(n);
      d.phi.resize(m);
      d.sigma2.resize(m);
      for (Index i = 0; i < n; ++i)
        for (Index q = 0; q < k; ++q) d.coef(q, i) = next();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < r; ++j) d.L(i, j) = next();
      for (Index i = 0; i < n; ++i) d.mu[i] = next();
      for (Index i = 0; i < m; ++i) d.phi[i] = next();
      for (Index i = 0; i < m; ++i) d.sigma2[i] = next();
      c.draws.push_back(std::move(d));
    }
  }

  const std::string states_file = man.at("files").value("states", "");
  if (!states_file.empty()) {
    std::ifstream in(dir / states_file, std::ios::binary);
    if (!in) throw DataError("missing " + states_file);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "FSVSTATE", 8) != 0) throw ParseError("bad state file magic");
    if (detail::get<std::uint32_t>(in) != static_cast<std::uint32_t>(kChainFormatVersion))
      throw ParseError("unsupported state file version");
    if (detail::get<std::uint32_t>(in) != 0x01020304u) throw ParseError("state file byte order differs from host");
    const auto draws = detail::get<std::uint64_t>(in);
    const auto T = detail::get<std::uint64_t>(in), mm = detail::get<std::uint64_t>(in),
               rr = detail::get<std::uint64_t>(in);
    if (static_cast<Index>(T) != c.T || static_cast<Index>(mm) != m || static_cast<Index>(rr) != r ||
        draws != c.draws.size())
      throw ParseError("state file dimensions do not match manifest");
    for (std::uint64_t s = 0; s < draws; ++s) {
      LatentStates st;
      st.h = detail::get_matrix_rowmajor(in, c.T, m);
      st.f = detail::get_matrix_rowmajor(in, c.T, r);
      c.states.push_back(std::move(st));
    }
  }
  return b;
}

}  // namespace fsvar
