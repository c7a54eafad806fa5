#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "molgrad/linalg.hpp"

namespace molgrad {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Thresholds of the firm family, 0 < lambda1 < lambda2.
struct ShrinkageParams {
  double lambda1 = 1.0;
  double lambda2 = 2.0;

  void validate() const {
    if (!(lambda1 > 0.0) || !std::isfinite(lambda1))
      throw ParameterError("firm shrinkage: lambda1 must be positive");
    if (!(lambda2 > lambda1) || !std::isfinite(lambda2))
      throw ParameterError("firm shrinkage: requires 0 < lambda1 < lambda2");
  }

  /// Cocoercivity constant 1 − λ₁/λ₂ of the firm operator.
  double beta() const noexcept { return 1.0 - lambda1 / lambda2; }
  /// Largest slope λ₂/(λ₂ − λ₁), attained between the thresholds.
  double max_slope() const noexcept { return lambda2 / (lambda2 - lambda1); }
};

inline void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(std::string(what) + " must be positive");
}

// ---------------------------------------------------------------------------
// Scalar shrinkage operators

inline double soft(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

inline double firm(double x, const ShrinkageParams& p) {
  const double a = std::abs(x);
  if (a <= p.lambda1) return 0.0;
  if (a <= p.lambda2) return std::copysign(p.lambda2 * (a - p.lambda1) / (p.lambda2 - p.lambda1), x);
  return x;
}

inline double garrote(double x, double lambda) {
  if (std::abs(x) <= lambda) return 0.0;
  return x - lambda * lambda / x;
}

// ---------------------------------------------------------------------------
// Penalties

/// Minimax concave penalty with threshold λ₂.
inline double mc_penalty(double x, double lambda2) {
  const double a = std::abs(x);
  if (a <= lambda2) return a - x * x / (2.0 * lambda2);
  return 0.5 * lambda2;
}

/// The ½-weakly convex penalty whose s-prox is garrote shrinkage:
///   ¼(|x|√(x²+4λ²) − x²) + λ²·log((|x| + √(x²+4λ²)) / 2λ).
/// The first bracket is rewritten as |x|·4λ²/(√(x²+4λ²)+|x|) and the log as
/// asinh(|x|/2λ), both free of cancellation near zero.
inline double garrote_penalty(double x, double lambda) {
  const double a = std::abs(x);
  const double l2 = lambda * lambda;
  const double r = std::sqrt(x * x + 4.0 * l2);
  return 0.25 * a * (4.0 * l2) / (r + a) + l2 * std::asinh(a / (2.0 * lambda));
}

/// A (possibly extended-valued) penalty on ℝᵏ together with its weak-convexity
/// modulus: φ + (weak_convexity/2)‖·‖² is convex. +∞ is encoded as
/// `kInfinity`.
class Penalty {
 public:
  using Evaluator = std::function<double(std::span<const double>)>;

  Penalty(std::string name, double weak_convexity, Evaluator eval)
      : name_(std::move(name)), weak_convexity_(weak_convexity), eval_(std::move(eval)) {
    if (!(weak_convexity_ >= 0.0)) throw ParameterError("penalty: weak convexity must be >= 0");
  }

  /// Separable penalty: Σᵢ φ(xᵢ).
  static Penalty separable(std::string name, double weak_convexity, std::function<double(double)> phi) {
    return Penalty(std::move(name), weak_convexity, [phi = std::move(phi)](std::span<const double> x) {
      double s = 0.0;
      for (double xi : x) s += phi(xi);
      return s;
    });
  }

  const std::string& name() const noexcept { return name_; }
  double weak_convexity() const noexcept { return weak_convexity_; }

  double operator()(double x) const { return eval_(std::span<const double>(&x, 1)); }
  double operator()(std::span<const double> x) const { return eval_(x); }
  double operator()(const Vector& x) const { return eval_(std::span<const double>(x.data(), x.size())); }

  /// c·φ, with modulus scaled accordingly.
  Penalty scaled(double c) const {
    if (!(c >= 0.0)) throw ParameterError("penalty: scale must be nonnegative");
    return Penalty(name_ + "*" + std::to_string(c), c * weak_convexity_,
                   [e = eval_, c](std::span<const double> x) {
                     const double v = e(x);
                     return std::isinf(v) ? v : c * v;
                   });
  }

  /// φ̌ := φ + (modulus/2)‖·‖². Convex when modulus ≥ weak_convexity.
  Penalty convexified(double modulus) const {
    return Penalty(name_ + "+quad", std::max(0.0, weak_convexity_ - modulus),
                   [e = eval_, modulus](std::span<const double> x) {
                     double sq = 0.0;
                     for (double xi : x) sq += xi * xi;
                     return e(x) + 0.5 * modulus * sq;
                   });
  }

 private:
  std::string name_;
  double weak_convexity_;
  Evaluator eval_;
};

inline Penalty zero_penalty() {
  return Penalty("zero", 0.0, [](std::span<const double>) { return 0.0; });
}

/// λ‖·‖₁ (convex; s-prox is soft shrinkage).
inline Penalty abs_penalty(double lambda) {
  require_positive(lambda, "soft threshold lambda");
  return Penalty::separable("abs", 0.0, [lambda](double x) { return lambda * std::abs(x); });
}

/// λ₁·φᴹᶜ_{λ₂}, (λ₁/λ₂)-weakly convex; s-prox is firm shrinkage.
inline Penalty firm_penalty(const ShrinkageParams& p) {
  p.validate();
  return Penalty::separable("mc", p.lambda1 / p.lambda2,
                            [p](double x) { return p.lambda1 * mc_penalty(x, p.lambda2); });
}

/// The ½-weakly convex garrote penalty.
inline Penalty garrote_penalty_fn(double lambda) {
  require_positive(lambda, "garrote lambda");
  return Penalty::separable("garrote", 0.5, [lambda](double x) { return garrote_penalty(x, lambda); });
}

/// λ₁·φᴹᶜ_{λ₂}(‖x‖₂): the Moreau-enhanced Euclidean norm, s-prox of vector firm.
inline Penalty vector_firm_penalty(const ShrinkageParams& p) {
  p.validate();
  return Penalty("norm-mc", p.lambda1 / p.lambda2, [p](std::span<const double> x) {
    double sq = 0.0;
    for (double xi : x) sq += xi * xi;
    return p.lambda1 * mc_penalty(std::sqrt(sq), p.lambda2);
  });
}

/// Indicator of the nonnegative orthant; s-prox is ReLU.
inline Penalty nonnegative_indicator() {
  return Penalty::separable("nonneg", 0.0, [](double x) { return x >= 0.0 ? 0.0 : kInfinity; });
}

// ---------------------------------------------------------------------------
// Moreau envelopes

struct EnvelopeValue {
  double value;
  double gradient;
};

/// Envelope of |·| with parameter γ (the Huber function) and its gradient
/// (x − soft(x, γ))/γ.
inline EnvelopeValue moreau_envelope_abs(double x, double gamma) {
  require_positive(gamma, "envelope gamma");
  const double a = std::abs(x);
  const double value = a <= gamma ? x * x / (2.0 * gamma) : a - 0.5 * gamma;
  return {value, (x - soft(x, gamma)) / gamma};
}

struct EnvelopeVector {
  double value;
  Vector gradient;
};

inline EnvelopeVector moreau_envelope_l1(const Vector& z, double gamma) {
  require_positive(gamma, "envelope gamma");
  EnvelopeVector out{0.0, Vector(z.size())};
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    auto e = moreau_envelope_abs(z[i], gamma);
    out.value += e.value;
    out.gradient[i] = e.gradient;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Componentwise and structured shrinkage

inline Vector soft(const Vector& x, double lambda) {
  return x.unaryExpr([lambda](double v) { return soft(v, lambda); });
}

inline Vector firm(const Vector& x, const ShrinkageParams& p) {
  return x.unaryExpr([&p](double v) { return firm(v, p); });
}

inline Vector garrote(const Vector& x, double lambda) {
  return x.unaryExpr([lambda](double v) { return garrote(v, lambda); });
}

/// x ↦ (x/‖x‖)·firm(‖x‖), with 0 ↦ 0.
inline Vector vector_firm(const Vector& x, const ShrinkageParams& p) {
  p.validate();
  const double r = x.norm();
  if (r == 0.0) return Vector::Zero(x.size());
  return x * (firm(r, p) / r);
}

/// Disjoint contiguous blocks covering {0, …, n−1}.
class GroupStructure {
 public:
  struct Block {
    Eigen::Index start;
    Eigen::Index size;
  };

  explicit GroupStructure(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw InputError("group structure: no blocks");
    Eigen::Index next = 0;
    for (const auto& b : blocks_) {
      if (b.size <= 0) throw InputError("group structure: empty block");
      if (b.start != next) throw InputError("group structure: blocks must be contiguous and disjoint");
      next += b.size;
    }
    dim_ = next;
  }

  static GroupStructure from_sizes(const std::vector<Eigen::Index>& sizes) {
    std::vector<Block> blocks;
    Eigen::Index start = 0;
    for (auto s : sizes) {
      blocks.push_back({start, s});
      start += s;
    }
    return GroupStructure(std::move(blocks));
  }

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  Eigen::Index dim() const noexcept { return dim_; }

 private:
  std::vector<Block> blocks_;
  Eigen::Index dim_ = 0;
};

inline Vector group_firm(const Vector& x, const GroupStructure& groups, const ShrinkageParams& p) {
  if (groups.dim() != x.size()) throw InputError("group firm: partition does not cover the vector");
  Vector out(x.size());
  for (const auto& b : groups.blocks()) out.segment(b.start, b.size) = vector_firm(x.segment(b.start, b.size), p);
  return out;
}

/// λ₁ Σ_g φᴹᶜ_{λ₂}(‖x_g‖), the penalty behind group firm shrinkage.
inline Penalty group_firm_penalty(const GroupStructure& groups, const ShrinkageParams& p) {
  p.validate();
  return Penalty("group-mc", p.lambda1 / p.lambda2, [groups, p](std::span<const double> x) {
    if (static_cast<Eigen::Index>(x.size()) != groups.dim()) throw InputError("group penalty: dimension mismatch");
    double total = 0.0;
    for (const auto& b : groups.blocks()) {
      double sq = 0.0;
      for (Eigen::Index i = b.start; i < b.start + b.size; ++i) sq += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      total += p.lambda1 * mc_penalty(std::sqrt(sq), p.lambda2);
    }
    return total;
  });
}

}  // namespace molgrad
