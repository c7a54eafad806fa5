#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "molgrad/errors.hpp"

namespace molgrad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw InputError(std::string(what) + ": non-finite entry");
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want)
    throw InputError(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                     ", expected " + std::to_string(want) + ")");
}

/// Bounded linear operator between finite-dimensional Euclidean spaces.
///
/// Four kinds are supported: an explicit dense matrix, the first-difference
/// operator x -> (x_0 - x_1, ..., x_{n-2} - x_{n-1}), a scaled identity and
/// the composition outer * inner. Instances are immutable; composition
/// children are shared.
class LinearMap {
 public:
  enum class Kind { DenseMatrix, FirstDifference, Composition, ScaledIdentity };

  static LinearMap dense(Matrix m) {
    if (m.rows() == 0 || m.cols() == 0) throw InputError("dense map: empty matrix");
    if (!m.allFinite()) throw InputError("dense map: non-finite entry");
    LinearMap map(Kind::DenseMatrix, m.cols(), m.rows());
    map.data_ = std::move(m);
    return map;
  }

  static LinearMap first_difference(Eigen::Index n) {
    if (n < 2) throw InputError("difference operator requires n >= 2");
    LinearMap map(Kind::FirstDifference, n, n - 1);
    // DᵀD is the path-graph Laplacian with spectrum 2 - 2cos(k*pi/n).
    const double s = 2.0 * std::sin(std::numbers::pi * static_cast<double>(n - 1) /
                                    (2.0 * static_cast<double>(n)));
    map.cached_norm_ = s;
    return map;
  }

  static LinearMap scaled_identity(double c, Eigen::Index n) {
    if (n < 1) throw InputError("scaled identity requires n >= 1");
    if (!std::isfinite(c)) throw InputError("scaled identity: non-finite scale");
    LinearMap map(Kind::ScaledIdentity, n, n);
    map.data_ = c;
    map.cached_norm_ = std::abs(c);
    return map;
  }

  static LinearMap compose(const LinearMap& outer, const LinearMap& inner) {
    require_dim(outer.input_dim(), inner.output_dim(), "composition");
    LinearMap map(Kind::Composition, inner.input_dim(), outer.output_dim());
    map.data_ = Children{std::make_shared<const LinearMap>(outer),
                         std::make_shared<const LinearMap>(inner)};
    if (outer.cached_norm_ && inner.cached_norm_)
      map.cached_norm_ = *outer.cached_norm_ * *inner.cached_norm_;  // submultiplicative bound
    return map;
  }

  Kind kind() const noexcept { return kind_; }
  Eigen::Index input_dim() const noexcept { return in_; }
  Eigen::Index output_dim() const noexcept { return out_; }

  /// Known upper bound on the operator norm (exact for difference and
  /// scaled-identity maps), if any.
  std::optional<double> cached_norm() const noexcept { return cached_norm_; }

  Vector apply(const Vector& x) const {
    require_dim(x.size(), in_, "apply");
    switch (kind_) {
      case Kind::DenseMatrix:
        return std::get<Matrix>(data_) * x;
      case Kind::FirstDifference:
        return x.head(in_ - 1) - x.tail(in_ - 1);
      case Kind::ScaledIdentity:
        return std::get<double>(data_) * x;
      case Kind::Composition: {
        const auto& c = std::get<Children>(data_);
        return c.outer->apply(c.inner->apply(x));
      }
    }
    return {};
  }

  Vector adjoint_apply(const Vector& u) const {
    require_dim(u.size(), out_, "adjoint_apply");
    switch (kind_) {
      case Kind::DenseMatrix:
        return std::get<Matrix>(data_).transpose() * u;
      case Kind::FirstDifference: {
        Vector x = Vector::Zero(in_);
        x.head(out_) += u;
        x.tail(out_) -= u;
        return x;
      }
      case Kind::ScaledIdentity:
        return std::get<double>(data_) * u;
      case Kind::Composition: {
        const auto& c = std::get<Children>(data_);
        return c.inner->adjoint_apply(c.outer->adjoint_apply(u));
      }
    }
    return {};
  }

  /// Lᵀ L x without materializing LᵀL.
  Vector gram_apply(const Vector& x) const { return adjoint_apply(apply(x)); }

  /// Explicit matrix, built column by column. Intended for tests and small maps.
  Matrix to_dense() const {
    Matrix m(out_, in_);
    Vector e = Vector::Zero(in_);
    for (Eigen::Index j = 0; j < in_; ++j) {
      e[j] = 1.0;
      m.col(j) = apply(e);
      e[j] = 0.0;
    }
    return m;
  }

 private:
  struct Children {
    std::shared_ptr<const LinearMap> outer;
    std::shared_ptr<const LinearMap> inner;
  };

  LinearMap(Kind kind, Eigen::Index in, Eigen::Index out) : kind_(kind), in_(in), out_(out) {}

  Kind kind_;
  Eigen::Index in_;
  Eigen::Index out_;
  std::variant<std::monostate, Matrix, double, Children> data_;
  std::optional<double> cached_norm_;
};

inline Vector apply(const LinearMap& map, const Vector& x) { return map.apply(x); }
inline Vector adjoint_apply(const LinearMap& map, const Vector& u) { return map.adjoint_apply(u); }

/// The (n-1) x n first-difference operator D = [I 0] - [0 I].
inline LinearMap difference_operator(Eigen::Index n) { return LinearMap::first_difference(n); }

struct NormEstimate {
  double value = 0.0;
  double tol = 0.0;
  int iterations = 0;
  bool converged = false;

  /// The estimate inflated by its tolerance; use wherever a bound must hold.
  double upper() const noexcept { return value * (1.0 + tol); }
};

namespace detail {

// Fixed pseudo-random unit seed. The all-ones vector is unsuitable: it spans
// the null space of the difference operator and is orthogonal to every other
// eigenvector of DᵀD.
inline Vector power_seed(Eigen::Index n) {
  std::mt19937_64 gen(0x5eed5eedULL);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * normal(gen);
  return v.normalized();
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given as a
/// callable. Stops once the eigen-residual ‖Mv - θv‖ ≤ tol·θ.
template <class Op>
NormEstimate power_iteration_psd(Op&& op, Eigen::Index n, double tol, int max_iter) {
  NormEstimate est;
  est.tol = tol;
  Vector v = power_seed(n);
  for (int k = 1; k <= max_iter; ++k) {
    Vector w = op(v);
    const double theta = v.dot(w);
    est.iterations = k;
    est.value = theta;
    const double wn = w.norm();
    if (wn == 0.0) {
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    if ((w - theta * v).norm() <= tol * std::abs(theta)) {
      est.converged = true;
      return est;
    }
    v = w / wn;
  }
  return est;
}

}  // namespace detail

/// σ_max(L) by power iteration on LᵀL from a fixed deterministic seed.
/// A zero map returns 0; non-convergence is reported via `converged`.
inline NormEstimate operator_norm(const LinearMap& map, double tol = 1e-10,
                                  int max_iter = 1'000'000) {
  if (tol <= 0.0) throw InputError("operator_norm: tol must be positive");
  if (max_iter < 1) throw InputError("operator_norm: max_iter must be positive");
  NormEstimate est = detail::power_iteration_psd(
      [&](const Vector& v) { return map.gram_apply(v); }, map.input_dim(), tol, max_iter);
  // Eigenvalue of LᵀL → singular value; relative error halves under sqrt.
  est.value = std::sqrt(std::max(est.value, 0.0));
  return est;
}

/// An upper bound on ‖L‖: the cached analytic value when available, otherwise
/// the tolerance-inflated power-iteration estimate.
inline double norm_bound(const LinearMap& map, double tol = 1e-10) {
  if (auto c = map.cached_norm()) return *c;
  return operator_norm(map, tol).upper();
}

}  // namespace molgrad
