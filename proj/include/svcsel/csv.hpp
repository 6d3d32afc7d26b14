#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "svcsel/error.hpp"

namespace svcsel {

/// A numeric table with a header row.
struct Table {
  std::vector<std::string> names;
  Eigen::MatrixXd values;

  [[nodiscard]] Eigen::Index column_index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<Eigen::Index>(i);
    }
    throw InvalidArgument("column '" + name + "' not found");
  }

  [[nodiscard]] Eigen::VectorXd column(const std::string& name) const { return values.col(column_index(name)); }

  [[nodiscard]] Eigen::MatrixXd columns(const std::vector<std::string>& cols) const {
    Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = column(cols[i]);
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: empty input");
  for (auto f : detail::split(line)) t.names.emplace_back(f);
  std::vector<double> cells;
  Eigen::Index rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != t.names.size()) {
      throw InvalidArgument("csv line " + std::to_string(line_no) + ": expected " + std::to_string(t.names.size()) +
                            " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw InvalidArgument("csv line " + std::to_string(line_no) + ": column '" + t.names[c] +
                              "' is not numeric ('" + std::string(f) + "')");
      }
      cells.push_back(v);
    }
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(t.names.size());
  t.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      cells.data(), rows, cols);
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return read_csv(in);
}

/// Shortest representation that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const Table& t) {
  for (std::size_t c = 0; c < t.names.size(); ++c) out << (c ? "," : "") << t.names[c];
  out << '\n';
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) out << (c ? "," : "") << format_double(t.values(r, c));
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Table& t) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  write_csv(out, t);
}

struct Standardization {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

/// Centre and scale named columns in place (sample SD). Constant columns are rejected.
inline std::vector<Standardization> standardize(Table& t, const std::vector<std::string>& cols) {
  std::vector<Standardization> out;
  const double n = static_cast<double>(t.values.rows());
  if (n < 2) throw InvalidArgument("standardize: need at least two rows");
  for (const auto& name : cols) {
    const Eigen::Index c = t.column_index(name);
    const double mean = t.values.col(c).mean();
    const double sd = std::sqrt((t.values.col(c).array() - mean).square().sum() / (n - 1.0));
    if (!(sd > 0.0)) throw InvalidArgument("standardize: column '" + name + "' is constant");
    t.values.col(c) = (t.values.col(c).array() - mean) / sd;
    out.push_back({name, mean, sd});
  }
  return out;
}

}  // namespace svcsel
