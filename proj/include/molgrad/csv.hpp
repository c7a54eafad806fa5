#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "molgrad/linalg.hpp"

namespace molgrad::csv {

// 17 significant digits: lossless for binary64.
inline std::ostream& precise(std::ostream& os) { return os << std::setprecision(17); }

inline void write_matrix(std::ostream& os, const Matrix& m) {
  precise(os);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
}

/// One entry per line (an n x 1 matrix).
inline void write_vector(std::ostream& os, const Vector& v) { write_matrix(os, v); }

inline Matrix read_matrix(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InputError("csv: cannot parse '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError("csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("csv: no data");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

/// Accepts a single column or a single row.
inline Vector read_vector(std::istream& is) {
  Matrix m = read_matrix(is);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw InputError("csv: expected a vector, got a matrix");
}

inline void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw InputError("csv: cannot open " + path.string() + " for writing");
  write_matrix(os, m);
}

inline void save_vector(const std::filesystem::path& path, const Vector& v) { save_matrix(path, v); }

inline Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("csv: cannot open " + path.string());
  return read_matrix(is);
}

inline Vector load_vector(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("csv: cannot open " + path.string());
  return read_vector(is);
}

}  // namespace molgrad::csv
