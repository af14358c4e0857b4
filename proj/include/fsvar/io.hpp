#pragma once

// Text formats: numeric data CSV, sign-restriction CSV, and tidy output.

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsvar/error.hpp"
#include "fsvar/model.hpp"

namespace fsvar::io {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Split one CSV line; double quotes may wrap fields containing commas.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

/// Quote a field if it holds a comma, quote, or surrounding space.
inline std::string quote_csv(const std::string& s) {
  const bool needs = s.find_first_of(",\"\n") != std::string::npos || trim(s) != s;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == ".";
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) return std::nullopt;
  return v;
}

struct Dataset {
  MatrixXd values;                 // T×n
  std::vector<std::string> names;  // n
};

/// Numeric CSV with a header row. Rows and columns in error messages are
/// 1-based and count data rows (the header is row 0).
inline Dataset read_data_csv(std::istream& in, bool first_column_labels = false) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: missing header row");
  auto header = split_csv_line(line);
  const std::size_t skip = first_column_labels ? 1 : 0;
  if (header.size() <= skip) throw ParseError("header has no data columns");
  Dataset d;
  d.names.assign(header.begin() + static_cast<std::ptrdiff_t>(skip), header.end());
  const auto n = static_cast<Index>(d.names.size());
  std::vector<double> cells;
  long row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto parts = split_csv_line(line);
    if (parts.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(parts.size()));
    for (std::size_t c = skip; c < parts.size(); ++c) {
      const long col = static_cast<long>(c - skip) + 1;
      if (is_missing_token(parts[c])) throw MissingValue(row, col);
      const auto v = parse_number(parts[c]);
      if (!v) throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col) +
                               ": not a number: '" + parts[c] + "'");
      if (!std::isfinite(*v)) throw MissingValue(row, col);
      cells.push_back(*v);
    }
  }
  if (row == 0) throw ParseError("no data rows");
  d.values.resize(row, n);
  for (long t = 0; t < row; ++t)
    for (Index i = 0; i < n; ++i) d.values(t, i) = cells[static_cast<std::size_t>(t * n + i)];
  return d;
}

inline Dataset ingest_csv(const std::string& path, bool first_column_labels = false) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return read_data_csv(in, first_column_labels);
}

inline std::optional<Sign> parse_sign_token(const std::string& s) {
  if (s == "+1" || s == "1" || s == "+") return Sign::pos;
  if (s == "-1" || s == "-") return Sign::neg;
  if (s == "0") return Sign::zero;
  if (s == "NA" || s == "na" || s.empty()) return Sign::free;
  return std::nullopt;
}

struct SignTable {
  SignMatrix signs;
  std::vector<std::string> shock_names;
  std::vector<std::string> variable_names;
};

/// Sign CSV: header row of shock names, then one row per variable with
/// entries +1, -1, 0 or NA. A leading label column is allowed.
inline SignTable read_sign_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty sign file");
  const auto header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line))
    if (!trim(line).empty()) rows.push_back(split_csv_line(line));
  if (rows.empty()) throw ParseError("no data rows");
  bool labels = false;
  for (const auto& r : rows)
    if (!r.empty() && !parse_sign_token(r.front())) labels = true;
  const std::size_t skip = labels ? 1 : 0;
  const auto n = static_cast<Index>(rows.size());
  const auto r = static_cast<Index>(header.size() - skip);
  SignTable t;
  t.signs = SignMatrix(n, r);
  t.shock_names.assign(header.begin() + static_cast<std::ptrdiff_t>(skip), header.end());
  for (Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != r + static_cast<Index>(skip))
      throw ParseError("sign row " + std::to_string(i + 1) + ": expected " + std::to_string(r) + " entries");
    t.variable_names.push_back(labels ? row.front() : "y" + std::to_string(i + 1));
    for (Index j = 0; j < r; ++j) {
      const auto s = parse_sign_token(row[static_cast<std::size_t>(j) + skip]);
      if (!s) throw ParseError("sign row " + std::to_string(i + 1) + ", column " + std::to_string(j + 1) +
                               ": unknown entry '" + row[static_cast<std::size_t>(j) + skip] + "'");
      t.signs(i, j) = *s;
    }
  }
  return t;
}

inline SignTable read_sign_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sign file '" + path + "'");
  return read_sign_csv(in);
}

inline void write_data_csv(std::ostream& out, const MatrixXd& y, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << quote_csv(names[i]);
  out << "\n";
  out.precision(17);
  for (Index t = 0; t < y.rows(); ++t) {
    for (Index i = 0; i < y.cols(); ++i) out << (i ? "," : "") << y(t, i);
    out << "\n";
  }
}

}  // namespace fsvar::io
