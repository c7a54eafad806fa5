#pragma once

#include <Eigen/Eigenvalues>

#include "molgrad/linalg.hpp"

namespace molgrad {

struct FidelityConstants {
  double rho = 0.0;         ///< λ_min(AᵀA), strong convexity of f
  double kappa = 0.0;       ///< λ_max(AᵀA), smoothness of f
  double kappa_fhat = 0.0;  ///< ‖AᵀA − (ρ/‖L‖²) LᵀL‖, smoothness of f̂
  double l_norm_sq = 0.0;   ///< the ‖L‖² bound used in the shift
};

/// ρ, κ and the smoothness κ̂ of f̂ = f − (ρ/(2‖L‖²))‖L·‖² for f = ½‖A·−y‖².
///
/// ρ comes from a dense symmetric eigendecomposition of AᵀA; κ̂ from power
/// iteration on the shifted Gram operator (applied matrix-free in L).
inline FidelityConstants fidelity_constants(const Matrix& A, const LinearMap& L,
                                            double tol = 1e-12, int max_iter = 2'000'000) {
  require_dim(L.input_dim(), A.cols(), "fidelity_constants");
  const Matrix gram = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  FidelityConstants c;
  c.rho = eig.eigenvalues().minCoeff();
  c.kappa = eig.eigenvalues().maxCoeff();
  if (!(c.rho > 1e-12 * std::max(c.kappa, 1.0)))
    throw InputError("overdetermined case required: lambda_min(A^T A) must be positive");
  c.l_norm_sq = std::pow(norm_bound(L), 2);
  const double shift = c.rho / c.l_norm_sq;
  NormEstimate est = detail::power_iteration_psd(
      [&](const Vector& v) -> Vector { return gram * v - shift * L.gram_apply(v); }, A.cols(), tol,
      max_iter);
  c.kappa_fhat = est.upper();
  return c;
}

/// f(x) = ½‖Ax − y‖² with cached Gram matrix and Aᵀy.
class QuadraticFidelity {
 public:
  QuadraticFidelity(Matrix A, Vector y) : A_(std::move(A)), y_(std::move(y)) {
    if (A_.rows() == 0 || A_.cols() == 0) throw InputError("fidelity: empty matrix");
    require_dim(y_.size(), A_.rows(), "fidelity");
    if (!A_.allFinite()) throw InputError("fidelity: non-finite matrix entry");
    require_finite(y_, "fidelity");
    gram_ = A_.transpose() * A_;
    aty_ = A_.transpose() * y_;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_, Eigen::EigenvaluesOnly);
    rho_ = eig.eigenvalues().minCoeff();
    kappa_ = eig.eigenvalues().maxCoeff();
  }

  /// Same fidelity with κ̂ computed for the companion operator L.
  QuadraticFidelity(Matrix A, Vector y, const LinearMap& L) : QuadraticFidelity(std::move(A), std::move(y)) {
    auto c = fidelity_constants(A_, L);
    kappa_fhat_ = c.kappa_fhat;
  }

  Eigen::Index dim() const noexcept { return A_.cols(); }
  const Matrix& A() const noexcept { return A_; }
  const Vector& y() const noexcept { return y_; }
  const Matrix& gram() const noexcept { return gram_; }
  double rho() const noexcept { return rho_; }
  double kappa() const noexcept { return kappa_; }
  /// Zero unless constructed with a companion operator.
  double kappa_fhat() const noexcept { return kappa_fhat_; }

  double value(const Vector& x) const {
    require_dim(x.size(), dim(), "fidelity value");
    return 0.5 * (A_ * x - y_).squaredNorm();
  }

  Vector gradient(const Vector& x) const {
    require_dim(x.size(), dim(), "fidelity gradient");
    return gram_ * x - aty_;
  }

 private:
  Matrix A_;
  Vector y_;
  Matrix gram_;
  Vector aty_;
  double rho_ = 0.0;
  double kappa_ = 0.0;
  double kappa_fhat_ = 0.0;
};

}  // namespace molgrad
