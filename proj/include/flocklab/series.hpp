#pragma once

// Time-indexed diagnostic records with named columns, serialized as CSV with
// 17-significant-digit decimals so that emitted files round-trip bit-exactly.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flocklab {

struct DiagnosticSeries {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::out_of_range("DiagnosticSeries: no column named '" + name + "'");
  }

  void append(std::vector<double> row) {
    if (row.size() != columns.size())
      throw std::invalid_argument("DiagnosticSeries: row width mismatch");
    for (double v : row)
      if (!std::isfinite(v))
        throw std::invalid_argument("DiagnosticSeries: non-finite entry");
    if (!rows.empty() && !(row[0] > rows.back()[0]))
      throw std::invalid_argument("DiagnosticSeries: time must be strictly increasing");
    rows.push_back(std::move(row));
  }

  std::vector<double> column(const std::string& name) const {
    std::size_t k = column_index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }

  double last(const std::string& name) const {
    if (rows.empty()) throw std::out_of_range("DiagnosticSeries: empty");
    return rows.back()[column_index(name)];
  }
};

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const DiagnosticSeries& s) {
  for (std::size_t i = 0; i < s.columns.size(); ++i)
    os << (i ? "," : "") << s.columns[i];
  os << '\n';
  for (const auto& row : s.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      os << (i ? "," : "") << format_full(row[i]);
    os << '\n';
  }
}

inline void write_csv(const std::string& path, const DiagnosticSeries& s) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(os, s);
}

inline DiagnosticSeries read_csv(std::istream& is) {
  DiagnosticSeries s;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream header(line);
  std::string tok;
  while (std::getline(header, tok, ',')) s.columns.push_back(tok);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    while (std::getline(ss, tok, ',')) {
      const char* c = tok.c_str();
      char* end = nullptr;
      double v = std::strtod(c, &end);
      if (end == c || *end != '\0')
        throw std::runtime_error("read_csv: bad number '" + tok + "' on line " +
                                 std::to_string(lineno));
      row.push_back(v);
    }
    if (row.size() != s.columns.size())
      throw std::runtime_error("read_csv: column count mismatch on line " +
                               std::to_string(lineno));
    s.rows.push_back(std::move(row));
  }
  return s;
}

inline DiagnosticSeries read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_csv: cannot open " + path);
  return read_csv(is);
}

}  // namespace flocklab
