#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "molgrad/linalg.hpp"
#include "molgrad/regularizers.hpp"

namespace molgrad {

/// A denoiser T = ∇ψ with declared cocoercivity constant β, so that T is
/// β⁻¹-Lipschitz. When the implicit penalty φ = ψ* − ½‖·‖² is known in closed
/// form it is attached as `induced_penalty`. ψ itself is never evaluated.
class Denoiser {
 public:
  using Operator = std::function<Vector(const Vector&)>;
  /// True when the operator is differentiable at x, with margin `h` for finite
  /// differences. Defaults to "everywhere".
  using SmoothnessTest = std::function<bool(const Vector&, double)>;

  Denoiser(std::string name, double beta, Operator op, std::optional<Penalty> induced = std::nullopt)
      : name_(std::move(name)), beta_(beta), op_(std::move(op)), induced_(std::move(induced)) {
    if (!(beta_ > 0.0 && beta_ <= 1.0)) throw ParameterError("denoiser: beta must lie in (0, 1]");
  }

  const std::string& name() const noexcept { return name_; }
  double beta() const noexcept { return beta_; }
  double lipschitz_bound() const noexcept { return 1.0 / beta_; }
  const std::optional<Penalty>& induced_penalty() const noexcept { return induced_; }

  /// The induced penalty is convex (the operator is a classical proximity
  /// operator); β is then only a declared lower bound.
  bool classically_nonexpansive() const noexcept { return classical_; }
  Denoiser& set_classically_nonexpansive(bool v) {
    classical_ = v;
    return *this;
  }

  std::optional<Eigen::Index> fixed_dim() const noexcept { return dim_; }
  Denoiser& set_fixed_dim(Eigen::Index n) {
    dim_ = n;
    return *this;
  }

  Denoiser& set_smoothness_test(SmoothnessTest t) {
    smooth_ = std::move(t);
    return *this;
  }
  bool smooth_at(const Vector& x, double h) const { return !smooth_ || smooth_(x, h); }

  Vector operator()(const Vector& x) const {
    if (dim_) require_dim(x.size(), *dim_, "denoiser input");
    Vector out = op_(x);
    require_dim(out.size(), x.size(), "denoiser output");
    return out;
  }

 private:
  std::string name_;
  double beta_;
  Operator op_;
  std::optional<Penalty> induced_;
  bool classical_ = false;
  std::optional<Eigen::Index> dim_;
  SmoothnessTest smooth_;
};

/// β used for soft shrinkage when the caller does not supply one. Soft is
/// firmly nonexpansive, so any β < 1 is admissible.
inline constexpr double kSoftDefaultBeta = 1.0 - 1e-9;

inline Denoiser soft_denoiser(double lambda, double beta = kSoftDefaultBeta) {
  require_positive(lambda, "soft threshold lambda");
  Denoiser d("soft", beta, [lambda](const Vector& x) { return soft(x, lambda); }, abs_penalty(lambda));
  d.set_classically_nonexpansive(true);
  return d;
}

inline Denoiser firm_denoiser(const ShrinkageParams& p) {
  p.validate();
  return Denoiser("firm", p.beta(), [p](const Vector& x) { return firm(x, p); }, firm_penalty(p));
}

inline Denoiser garrote_denoiser(double lambda) {
  require_positive(lambda, "garrote lambda");
  return Denoiser("garrote", 0.5, [lambda](const Vector& x) { return garrote(x, lambda); },
                  garrote_penalty_fn(lambda));
}

namespace detail {
inline bool away_from(double v, double level, double margin) { return std::abs(v - level) > margin; }
}  // namespace detail

inline Denoiser vector_firm_denoiser(const ShrinkageParams& p) {
  p.validate();
  Denoiser d("vector-firm", p.beta(), [p](const Vector& x) { return vector_firm(x, p); },
             vector_firm_penalty(p));
  d.set_smoothness_test([p](const Vector& x, double h) {
    const double r = x.norm(), m = 10.0 * h * std::sqrt(static_cast<double>(x.size()));
    return detail::away_from(r, p.lambda1, m) && detail::away_from(r, p.lambda2, m);
  });
  return d;
}

inline Denoiser group_firm_denoiser(const GroupStructure& groups, const ShrinkageParams& p) {
  p.validate();
  Denoiser d("group-firm", p.beta(), [groups, p](const Vector& x) { return group_firm(x, groups, p); },
             group_firm_penalty(groups, p));
  d.set_fixed_dim(groups.dim());
  d.set_smoothness_test([groups, p](const Vector& x, double h) {
    for (const auto& b : groups.blocks()) {
      const double r = x.segment(b.start, b.size).norm();
      const double m = 10.0 * h * std::sqrt(static_cast<double>(b.size));
      if (!detail::away_from(r, p.lambda1, m) || !detail::away_from(r, p.lambda2, m)) return false;
    }
    return true;
  });
  return d;
}

/// Lower bound applied to ‖WᵀW‖ when deriving β for a tied-weight network.
inline constexpr double kTiedWeightGuard = 1e-9;

/// T = Wᵀ ∘ ReLU ∘ W = ∇(ψ∘W) with ψ the antiderivative of ReLU.
/// β = 1/max(‖WᵀW‖, 1 + guard). When ‖WᵀW‖ ≤ 1 the network is a classical
/// proximity operator and is flagged as such.
inline Denoiser tied_weight_relu_denoiser(const Matrix& W) {
  if (W.size() == 0 || !W.allFinite()) throw InputError("tied-weight network: invalid weight matrix");
  if (W.isZero(0.0)) throw InputError("tied-weight network: W must be nonzero");
  const double s = operator_norm(LinearMap::dense(W), 1e-12).upper();
  const double kappa = s * s;
  Denoiser d("tied-relu", 1.0 / std::max(kappa, 1.0 + kTiedWeightGuard),
             [W](const Vector& x) -> Vector { return W.transpose() * (W * x).cwiseMax(0.0); });
  d.set_fixed_dim(W.cols());
  d.set_classically_nonexpansive(kappa <= 1.0);
  d.set_smoothness_test([W](const Vector& x, double h) {
    // Forward differences of size h move Wx by at most ‖W‖·h per coordinate.
    return ((W * x).cwiseAbs().array() > 10.0 * h * std::max(1.0, W.cwiseAbs().maxCoeff())).all();
  });
  return d;
}

/// Named parameters for catalog construction ("lambda", "lambda1", "lambda2",
/// "beta", "group_size").
using ParamMap = std::map<std::string, double>;

namespace detail {
inline double param(const ParamMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw ParameterError("missing parameter '" + key + "'");
  return it->second;
}
inline double param_or(const ParamMap& p, const std::string& key, double dflt) {
  auto it = p.find(key);
  return it == p.end() ? dflt : it->second;
}
}  // namespace detail

/// Catalog lookup by name: "soft", "firm", "garrote", "vector-firm",
/// "group-firm". Group firm uses uniform blocks of `group_size` and therefore
/// needs the ambient dimension.
inline Denoiser make_denoiser(const std::string& name, const ParamMap& params, Eigen::Index dim = 0) {
  static const std::set<std::string> known = {"soft", "firm", "garrote", "vector-firm", "group-firm"};
  if (!known.count(name)) throw InputError("unknown denoiser '" + name + "'");
  if (name == "soft")
    return soft_denoiser(detail::param(params, "lambda"), detail::param_or(params, "beta", kSoftDefaultBeta));
  if (name == "garrote") return garrote_denoiser(detail::param(params, "lambda"));
  ShrinkageParams p{detail::param(params, "lambda1"), detail::param(params, "lambda2")};
  if (name == "firm") return firm_denoiser(p);
  if (name == "vector-firm") return vector_firm_denoiser(p);
  if (name == "group-firm") {
    const double gs = detail::param_or(params, "group_size", 2.0);
    if (!(gs >= 1.0) || gs != std::floor(gs)) throw ParameterError("group_size must be a positive integer");
    const auto size = static_cast<Eigen::Index>(gs);
    if (dim <= 0 || dim % size != 0) throw InputError("group-firm: dimension must be a positive multiple of group_size");
    return group_firm_denoiser(GroupStructure::from_sizes(std::vector<Eigen::Index>(dim / size, size)), p);
  }
  throw InputError("unknown denoiser '" + name + "'");
}

/// Penalty catalog under the same names as make_denoiser.
inline Penalty make_penalty(const std::string& name, const ParamMap& params, Eigen::Index dim = 0) {
  auto d = make_denoiser(name, params, dim);
  return *d.induced_penalty();
}

}  // namespace molgrad
