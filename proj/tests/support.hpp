#pragma once

#include <random>

#include "molgrad/linalg.hpp"

namespace molgrad::test {

inline Vector random_vector(Eigen::Index n, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Vector v(n);
  for (auto& e : v) e = N(gen);
  return v;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = N(gen);
  return m;
}

/// Central-difference gradient of a scalar function.
template <class F>
Vector central_gradient(F&& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

}  // namespace molgrad::test
