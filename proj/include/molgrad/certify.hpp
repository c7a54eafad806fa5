#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "molgrad/denoiser.hpp"

namespace molgrad {

// Sampled checks of the conditions that make an operator a MoL-Grad
// denoiser. Everything is deterministic given (seed, sample count).

/// Axis-aligned sampling box [lo, hi]^dim.
struct DomainBox {
  double lo = -20.0;
  double hi = 20.0;
  Eigen::Index dim = 1;

  void validate() const {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw InputError("domain box: need lo < hi");
    if (dim < 1) throw InputError("domain box: dimension must be positive");
  }
};

/// Offset of the near-coincident pairs used to catch local slope maxima.
inline constexpr double kNearPairOffset = 1e-4;
/// Violations are margins below −kViolationSlack·‖x − y‖².
inline constexpr double kViolationSlack = 1e-10;

struct ViolationReport {
  int violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  ///< normalized by ‖x − y‖²
  int pairs = 0;

  bool ok() const noexcept { return violations == 0; }
};

namespace detail {

/// Even-indexed pairs are independent uniform draws; odd-indexed pairs are
/// x and x + 1e−4·(random unit direction).
class PairSampler {
 public:
  PairSampler(const DomainBox& box, std::uint64_t seed) : box_(box), gen_(seed), unif_(box.lo, box.hi) {
    box_.validate();
  }

  std::pair<Vector, Vector> next() {
    Vector x = draw();
    Vector y;
    if (count_++ % 2 == 0) {
      y = draw();
    } else {
      Vector d(box_.dim);
      for (auto& v : d) v = normal_(gen_);
      const double n = d.norm();
      y = x + (n > 0.0 ? kNearPairOffset / n : 0.0) * d;
    }
    return {std::move(x), std::move(y)};
  }

  Vector draw() {
    Vector v(box_.dim);
    for (auto& e : v) e = unif_(gen_);
    return v;
  }

 private:
  DomainBox box_;
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_;
  std::normal_distribution<double> normal_;
  std::uint64_t count_ = 0;
};

template <class Margin>
ViolationReport scan_pairs(const DomainBox& box, int n_pairs, std::uint64_t seed, Margin&& margin) {
  if (n_pairs < 1) throw InputError("certification: n_pairs must be >= 1");
  PairSampler sampler(box, seed);
  ViolationReport rep;
  for (int i = 0; i < n_pairs; ++i) {
    auto [x, y] = sampler.next();
    const double d2 = (x - y).squaredNorm();
    if (d2 == 0.0) continue;
    const double m = margin(x, y) / d2;
    ++rep.pairs;
    rep.worst_margin = std::min(rep.worst_margin, m);
    if (m < -kViolationSlack) ++rep.violations;
  }
  return rep;
}

}  // namespace detail

/// Empirical lower bound on the Lipschitz constant of T over the box.
template <class Op>
double estimate_lipschitz(const Op& T, const DomainBox& box, int n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw InputError("estimate_lipschitz: n_pairs must be >= 1");
  detail::PairSampler sampler(box, seed);
  double best = 0.0;
  for (int i = 0; i < n_pairs; ++i) {
    auto [x, y] = sampler.next();
    const double d = (x - y).norm();
    if (d == 0.0) continue;
    best = std::max(best, (T(x) - T(y)).norm() / d);
  }
  return best;
}

/// Counts pairs with ⟨x − y, T(x) − T(y)⟩ < −slack·‖x − y‖².
template <class Op>
ViolationReport check_monotonicity(const Op& T, const DomainBox& box, int n_pairs, std::uint64_t seed) {
  return detail::scan_pairs(box, n_pairs, seed, [&](const Vector& x, const Vector& y) {
    return (x - y).dot(T(x) - T(y));
  });
}

/// β-cocoercivity: ⟨βT(u) − βT(v), u − v⟩ ≥ ‖βT(u) − βT(v)‖².
template <class Op>
ViolationReport check_cocoercivity(const Op& T, double beta, const DomainBox& box, int n_pairs, std::uint64_t seed) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ParameterError("check_cocoercivity: beta must lie in (0, 1]");
  return detail::scan_pairs(box, n_pairs, seed, [&](const Vector& u, const Vector& v) {
    const Vector d = beta * (T(u) - T(v));
    return d.dot(u - v) - d.squaredNorm();
  });
}

/// T is β-cocoercive iff S := T ∘ (β·Id) is firmly nonexpansive. Checks the
/// latter directly on sampled pairs.
template <class Op>
ViolationReport averagedness_relation_report(const Op& T, double beta, const DomainBox& box, int n_pairs,
                                             std::uint64_t seed) {
  if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("averagedness check: beta must lie in (0, 1)");
  return detail::scan_pairs(box, n_pairs, seed, [&](const Vector& x, const Vector& y) {
    const Vector d = T(Vector(beta * x)) - T(Vector(beta * y));
    return d.dot(x - y) - d.squaredNorm();
  });
}

template <class Op>
bool averagedness_relation_check(const Op& T, double beta, const DomainBox& box, int n_pairs, std::uint64_t seed) {
  return averagedness_relation_report(T, beta, box, n_pairs, seed).ok();
}

/// Forward-difference Jacobian of T at x.
template <class Op>
Matrix fd_jacobian(const Op& T, const Vector& x, double h) {
  const Vector fx = T(x);
  Matrix J(fx.size(), x.size());
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    J.col(j) = (T(xp) - fx) / h;
    xp[j] = x[j];
  }
  return J;
}

/// max over probes of ‖J − Jᵀ‖_F / (1 + ‖J‖_F). A conservative (gradient)
/// field has a symmetric Jacobian wherever it is differentiable.
template <class Op>
double check_jacobian_symmetry(const Op& T, const std::vector<Vector>& probes, double fd_step = 1e-6) {
  double worst = 0.0;
  for (const auto& x : probes) {
    const Matrix J = fd_jacobian(T, x, fd_step);
    if (J.rows() != J.cols()) throw InputError("jacobian symmetry: operator is not dimension preserving");
    worst = std::max(worst, (J - J.transpose()).norm() / (1.0 + J.norm()));
  }
  return worst;
}

/// Uniform probes in the box where the denoiser is differentiable (rejection
/// sampling against its smoothness test).
inline std::vector<Vector> generic_probes(const Denoiser& T, const DomainBox& box, int count, std::uint64_t seed,
                                          double fd_step = 1e-6, int max_attempts = 1'000'000) {
  detail::PairSampler sampler(box, seed);
  std::vector<Vector> probes;
  for (int attempts = 0; static_cast<int>(probes.size()) < count; ++attempts) {
    if (attempts >= max_attempts) throw InputError("generic_probes: too many rejected probes");
    Vector x = sampler.draw();
    if (T.smooth_at(x, fd_step)) probes.push_back(std::move(x));
  }
  return probes;
}

struct CertifyOptions {
  DomainBox box{};
  int n_pairs = 10'000;
  std::uint64_t seed = 1;
  int jacobian_probes = 100;
  double fd_step = 1e-6;
  double lipschitz_slack = 1e-6;
};

struct CertificationReport {
  std::string denoiser;
  double beta = 0.0;
  double lipschitz_estimate = 0.0;
  ViolationReport monotonicity;
  ViolationReport cocoercivity;
  double jacobian_asymmetry = 0.0;
  int samples_used = 0;
  bool pass = false;
};

/// Runs every sampled check at the denoiser's declared β. The verdict passes
/// iff no monotonicity or cocoercivity violations are found and the Lipschitz
/// estimate stays within (1/β)(1 + slack). The Jacobian asymmetry is reported
/// but judged by the caller.
inline CertificationReport certify(const Denoiser& T, CertifyOptions opt) {
  if (auto n = T.fixed_dim()) opt.box.dim = *n;
  opt.box.validate();
  CertificationReport r;
  r.denoiser = T.name();
  r.beta = T.beta();
  r.lipschitz_estimate = estimate_lipschitz(T, opt.box, opt.n_pairs, opt.seed);
  r.monotonicity = check_monotonicity(T, opt.box, opt.n_pairs, opt.seed + 1);
  r.cocoercivity = check_cocoercivity(T, T.beta(), opt.box, opt.n_pairs, opt.seed + 2);
  if (opt.jacobian_probes > 0)
    r.jacobian_asymmetry = check_jacobian_symmetry(
        T, generic_probes(T, opt.box, opt.jacobian_probes, opt.seed + 3, opt.fd_step), opt.fd_step);
  r.samples_used = 3 * opt.n_pairs + opt.jacobian_probes;
  r.pass = r.monotonicity.ok() && r.cocoercivity.ok() &&
           r.lipschitz_estimate <= (1.0 / r.beta) * (1.0 + opt.lipschitz_slack);
  return r;
}

}  // namespace molgrad
