#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mctm/rng.hpp"

namespace mctm {

// n observations of a J-dimensional continuous outcome plus column metadata.
struct Dataset {
  Eigen::MatrixXd values;          // n x J
  std::vector<std::string> names;  // length J

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t j = 0; j < data.names.size(); ++j)
    out << (j ? "," : "") << data.names[j];
  out << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.dims(); ++j)
      out << (j ? "," : "") << data.values(i, j);
    out << "\n";
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return std::nullopt;
  std::size_t b = s.find_last_not_of(" \t\r");
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data() + a, s.data() + b + 1, value);
  if (ec != std::errc() || ptr != s.data() + b + 1) return std::nullopt;
  return value;
}

}  // namespace detail

struct CsvLoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_dropped_nonfinite = 0;
};

// Loads the named (or 0-based indexed) columns of a headered CSV file.
// Rows with non-finite cells are dropped and counted. When the surviving row
// count exceeds max_rows, a uniform subsample of size max_rows is kept
// (without replacement, seeded).
inline Dataset load_csv(const std::string& path,
                        const std::vector<std::string>& columns,
                        std::size_t max_rows = 0, std::uint64_t seed = 0,
                        CsvLoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  std::vector<std::size_t> col_idx;
  for (const auto& c : columns) {
    auto it = std::find(header.begin(), header.end(), c);
    if (it != header.end()) {
      col_idx.push_back(static_cast<std::size_t>(it - header.begin()));
      continue;
    }
    // Fall back to a 0-based numeric index.
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), idx);
    if (ec == std::errc() && ptr == c.data() + c.size() && idx < header.size()) {
      col_idx.push_back(idx);
    } else {
      throw std::runtime_error("column not found: '" + c + "' in " + path);
    }
  }

  std::vector<std::vector<double>> rows;
  CsvLoadReport rep;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row(col_idx.size());
    bool finite = true;
    for (std::size_t j = 0; j < col_idx.size(); ++j) {
      if (col_idx[j] >= cells.size())
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": too few columns in " + path);
      const auto v = detail::parse_double(cells[col_idx[j]]);
      if (!v)
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": unparsable numeric '" + cells[col_idx[j]] +
                                 "' in " + path);
      if (!std::isfinite(*v)) finite = false;
      row[j] = *v;
    }
    ++rep.rows_read;
    if (!finite) {
      ++rep.rows_dropped_nonfinite;
      continue;
    }
    rows.push_back(std::move(row));
  }

  if (max_rows > 0 && rows.size() > max_rows) {
    // Partial Fisher-Yates: uniform without replacement.
    Rng rng(derive_seed(seed, "csv-subsample"));
    for (std::size_t i = 0; i < max_rows; ++i) {
      const std::size_t j = i + rng.uniform_index(rows.size() - i);
      std::swap(rows[i], rows[j]);
    }
    rows.resize(max_rows);
  }

  Dataset data;
  data.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(col_idx.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < col_idx.size(); ++j)
      data.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  for (std::size_t j = 0; j < col_idx.size(); ++j)
    data.names.push_back(header[col_idx[j]]);
  if (report) *report = rep;
  return data;
}

}  // namespace mctm
