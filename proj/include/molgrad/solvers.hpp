#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "molgrad/csv.hpp"
#include "molgrad/denoiser.hpp"
#include "molgrad/fidelity.hpp"

namespace molgrad {

enum class StopReason { Converged, MaxIterations };

inline const char* to_string(StopReason r) {
  return r == StopReason::Converged ? "converged" : "max_iterations";
}

/// Per-iteration record of a solver run. Iterates are stored every `stride`
/// iterations; the scalar columns are stored for every iteration.
struct SolverTrace {
  int stride = 10;
  std::vector<int> iter;
  std::vector<double> residual;
  std::vector<double> objective;    ///< NaN when no objective is attached
  std::vector<double> discrepancy;  ///< filled when a reference run is attached
  std::vector<std::pair<int, Vector>> snapshots;
  int iterations = 0;
  StopReason stop = StopReason::MaxIterations;
  double wall_seconds = 0.0;  ///< informational only, excluded from CSV

  void record(int k, double res, double obj, const Vector& x) {
    iter.push_back(k);
    residual.push_back(res);
    objective.push_back(obj);
    if (stride > 0 && k % stride == 0) snapshots.emplace_back(k, x);
  }

  std::size_t size() const noexcept { return iter.size(); }

  /// Columns iter, residual, objective[, discrepancy].
  void write_csv(std::ostream& os) const {
    csv::precise(os);
    const bool with_disc = discrepancy.size() == iter.size() && !iter.empty();
    os << "iter,residual,objective" << (with_disc ? ",discrepancy" : "") << '\n';
    for (std::size_t i = 0; i < iter.size(); ++i) {
      os << iter[i] << ',' << residual[i] << ',' << objective[i];
      if (with_disc) os << ',' << discrepancy[i];
      os << '\n';
    }
  }
};

/// Thrown when an iterate becomes non-finite or explodes; carries the trace
/// up to the failure.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, SolverTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const SolverTrace& trace() const noexcept { return trace_; }

 private:
  SolverTrace trace_;
};

/// Iterates with norm above this are treated as divergent.
inline constexpr double kDivergenceNorm = 1e12;

namespace detail {
inline bool diverged(const Vector& v) { return !v.allFinite() || v.norm() > kDivergenceNorm; }
inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }
using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}
}  // namespace detail

using Objective = std::function<double(const Vector&)>;

// ---------------------------------------------------------------------------
// Forward-backward splitting with a MoL-Grad denoiser

inline constexpr const char* kFbsWindow = "FBS step-size window";

/// Throws ConfigError unless β ∈ ((κ−ρ)/(κ+ρ), 1) and μ ∈ [(1−β)/ρ, (1+β)/κ).
/// κ = ρ is accepted, with β-infimum 0.
inline void check_fbs_window(double mu, double beta, double rho, double kappa) {
  if (!(rho > 0.0)) throw ConfigError(kFbsWindow, "rho must be positive");
  if (!(kappa >= rho)) throw ConfigError(kFbsWindow, "kappa must be >= rho");
  const double beta_inf = (kappa - rho) / (kappa + rho);
  if (!(beta > beta_inf && beta < 1.0))
    throw ConfigError(kFbsWindow, "beta = " + std::to_string(beta) + " outside ((kappa-rho)/(kappa+rho), 1) = (" +
                                      std::to_string(beta_inf) + ", 1)");
  const double lo = (1.0 - beta) / rho;
  const double hi = (1.0 + beta) / kappa;
  if (!(mu >= lo && mu < hi))
    throw ConfigError(kFbsWindow, "mu = " + std::to_string(mu) + " outside [(1-beta)/rho, (1+beta)/kappa) = [" +
                                      std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

inline bool in_fbs_window(double mu, double beta, double rho, double kappa) {
  try {
    check_fbs_window(mu, beta, rho, kappa);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

/// Validated configuration for x_{k+1} = T(x_k − μ∇f(x_k)).
class FbsConfig {
 public:
  FbsConfig(double mu, Denoiser denoiser, std::shared_ptr<const QuadraticFidelity> fidelity, int max_iter = 10'000,
            double stop_tol = 1e-10)
      : mu_(mu), max_iter_(max_iter), stop_tol_(stop_tol), denoiser_(std::move(denoiser)), fidelity_(std::move(fidelity)) {
    if (!fidelity_) throw InputError("FbsConfig: missing fidelity");
    if (max_iter_ < 0) throw InputError("FbsConfig: max_iter must be >= 0");
    check_fbs_window(mu_, denoiser_.beta(), fidelity_->rho(), fidelity_->kappa());
  }

  double mu() const noexcept { return mu_; }
  int max_iter() const noexcept { return max_iter_; }
  double stop_tol() const noexcept { return stop_tol_; }
  const Denoiser& denoiser() const noexcept { return denoiser_; }
  const QuadraticFidelity& fidelity() const noexcept { return *fidelity_; }

  int snapshot_stride = 10;
  Objective objective;  ///< optional, recorded in the trace

  /// The forward-backward map x ↦ T(x − μ∇f(x)).
  Vector step(const Vector& x) const { return denoiser_(Vector(x - mu_ * fidelity_->gradient(x))); }

 private:
  double mu_;
  int max_iter_;
  double stop_tol_;
  Denoiser denoiser_;
  std::shared_ptr<const QuadraticFidelity> fidelity_;
};

struct FbsResult {
  Vector x;
  SolverTrace trace;
};

/// Runs until ‖x_{k+1} − x_k‖ ≤ stop_tol·(1 + ‖x_k‖) or max_iter updates.
/// stop_tol ≤ 0 runs the full iteration count.
inline FbsResult run_fbs(const FbsConfig& cfg, const Vector& x0) {
  require_dim(x0.size(), cfg.fidelity().dim(), "run_fbs x0");
  require_finite(x0, "run_fbs x0");
  const auto t0 = detail::Clock::now();
  FbsResult r{x0, {}};
  r.trace.stride = cfg.snapshot_stride;
  for (int k = 0; k < cfg.max_iter(); ++k) {
    Vector next = cfg.step(r.x);
    if (detail::diverged(next)) {
      r.trace.iterations = k;
      r.trace.wall_seconds = detail::seconds_since(t0);
      throw DivergenceError("run_fbs: iterate diverged at iteration " + std::to_string(k), std::move(r.trace));
    }
    const double res = (next - r.x).norm();
    const double scale = 1.0 + r.x.norm();
    r.x = std::move(next);
    r.trace.record(k, res, cfg.objective ? cfg.objective(r.x) : detail::nan(), r.x);
    r.trace.iterations = k;
    if (res <= cfg.stop_tol() * scale) {
      r.trace.stop = StopReason::Converged;
      break;
    }
  }
  r.trace.wall_seconds = detail::seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Primal-dual splitting

inline constexpr const char* kPdConditionI = "primal-dual condition (i)";
inline constexpr const char* kPdConditionII = "primal-dual condition (ii)";

struct PdParams {
  double sigma;
  double tau;
};

/// σ := δρβ/(‖L‖²(1−β)), τ := γ(σ‖L‖² + κ/2)⁻¹. Both step-size conditions
/// hold by construction for δ ∈ (0, 1], γ ∈ (0, 1).
inline PdParams derive_pd_params(double rho, double kappa, double l_norm_sq, double beta, double delta = 1.0,
                                 double gamma = 0.9) {
  if (!(rho > 0.0) || !(kappa > 0.0) || !(l_norm_sq > 0.0))
    throw ParameterError("derive_pd_params: rho, kappa and ||L||^2 must be positive");
  if (!(beta > 0.0 && beta < 1.0))
    throw ParameterError("derive_pd_params: beta must lie in (0, 1); supply sigma explicitly for convex penalties");
  if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("derive_pd_params: delta must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("derive_pd_params: gamma must lie in (0, 1)");
  const double sigma = delta * rho * beta / (l_norm_sq * (1.0 - beta));
  return {sigma, gamma / (sigma * l_norm_sq + 0.5 * kappa)};
}

/// Largest σ allowed by condition (i): ρβ/(‖L‖²(1−β)).
inline double pd_sigma_bound(double rho, double l_norm_sq, double beta) {
  return rho * beta / (l_norm_sq * (1.0 - beta));
}

/// Validated configuration of the modified primal-dual scheme.
struct PdConfig {
  double sigma = 0.0;
  double tau = 0.0;
  LinearMap L;
  double l_norm = 0.0;  ///< upper bound on ‖L‖ used in the recursion and conditions
  double rho = 0.0;     ///< strong convexity of f
  double kappa = 0.0;   ///< smoothness of f̂
  Denoiser denoiser;
  std::shared_ptr<const QuadraticFidelity> fidelity;
  int max_iter = 10'000;
  double stop_tol = 1e-10;
  int snapshot_stride = 10;
  Objective objective;

  PdConfig(double sigma_, double tau_, LinearMap L_, double rho_, double kappa_, Denoiser denoiser_,
           std::shared_ptr<const QuadraticFidelity> fidelity_)
      : sigma(sigma_), tau(tau_), L(std::move(L_)), l_norm(norm_bound(L)), rho(rho_), kappa(kappa_),
        denoiser(std::move(denoiser_)), fidelity(std::move(fidelity_)) {}

  double l_norm_sq() const noexcept { return l_norm * l_norm; }

  /// Throws ConfigError naming the violated condition. Condition (i) is not
  /// applied to classical (convex-penalty) denoisers.
  void validate() const {
    if (!fidelity) throw InputError("PdConfig: missing fidelity");
    require_dim(L.input_dim(), fidelity->dim(), "PdConfig L");
    if (!(sigma > 0.0) || !(tau > 0.0)) throw ConfigError(kPdConditionII, "sigma and tau must be positive");
    if (!(rho > 0.0) || !(kappa > 0.0) || !(l_norm > 0.0))
      throw ConfigError(kPdConditionI, "rho, kappa and ||L|| must be positive");
    if (max_iter < 0) throw InputError("PdConfig: max_iter must be >= 0");
    const double beta = denoiser.beta();
    if (!denoiser.classically_nonexpansive() && beta < 1.0) {
      const double bound = pd_sigma_bound(rho, l_norm_sq(), beta);
      if (sigma > bound * (1.0 + 1e-12))
        throw ConfigError(kPdConditionI, "sigma = " + std::to_string(sigma) +
                                             " exceeds rho*beta/(||L||^2 (1-beta)) = " + std::to_string(bound));
    }
    const double lhs = tau * (sigma * l_norm_sq() + 0.5 * kappa);
    if (!(lhs < 1.0))
      throw ConfigError(kPdConditionII, "tau*(sigma*||L||^2 + kappa/2) = " + std::to_string(lhs) + " must be < 1");
  }
};

struct PrimalDualState {
  Vector x;
  Vector u;
};

/// One-step iterator of the modified primal-dual scheme:
///   ũ ← u + σLx
///   u⁺ ← ũ − σ T(ũ / (σ + ρ/‖L‖²))
///   x⁺ ← (Id + (τρ/‖L‖²) LᵀL) x − τ∇f(x) − τLᵀ(2u⁺ − u)
/// No validation: run_pd_molgrad validates first.
class PdMolgradStepper {
 public:
  PdMolgradStepper(const PdConfig& cfg, PrimalDualState init) : cfg_(cfg), s_(std::move(init)) {
    require_dim(s_.x.size(), cfg_.L.input_dim(), "primal-dual x0");
    require_dim(s_.u.size(), cfg_.L.output_dim(), "primal-dual u0");
  }

  const PrimalDualState& state() const noexcept { return s_; }

  /// Advances one iteration; returns the joint residual ‖(Δx, Δu)‖.
  double step() {
    const double shift = cfg_.rho / cfg_.l_norm_sq();
    const Vector Lx = cfg_.L.apply(s_.x);
    const Vector u_tilde = s_.u + cfg_.sigma * Lx;
    Vector u_next = u_tilde - cfg_.sigma * cfg_.denoiser(Vector(u_tilde / (cfg_.sigma + shift)));
    // (τρ/‖L‖²)LᵀLx and −τLᵀ(2u⁺ − u) share one adjoint application.
    Vector x_next = s_.x - cfg_.tau * cfg_.fidelity->gradient(s_.x) +
                    cfg_.L.adjoint_apply(Vector(cfg_.tau * shift * Lx - cfg_.tau * (2.0 * u_next - s_.u)));
    const double res = std::sqrt((x_next - s_.x).squaredNorm() + (u_next - s_.u).squaredNorm());
    s_.x = std::move(x_next);
    s_.u = std::move(u_next);
    return res;
  }

 private:
  const PdConfig& cfg_;
  PrimalDualState s_;
};

/// Condat–Vũ form II, no relaxation:
///   u⁺ ← prox_{σg*}(u + σLx)
///   x⁺ ← x − τ∇h(x) − τLᵀ(2u⁺ − u)
/// The smooth gradient and the dual prox are supplied as callables.
template <class Grad, class DualProx>
class CondatVuStepper {
 public:
  CondatVuStepper(Grad grad, DualProx dual_prox, const LinearMap& L, double sigma, double tau, PrimalDualState init)
      : grad_(std::move(grad)), prox_(std::move(dual_prox)), L_(L), sigma_(sigma), tau_(tau), s_(std::move(init)) {
    require_dim(s_.x.size(), L_.input_dim(), "Condat-Vu x0");
    require_dim(s_.u.size(), L_.output_dim(), "Condat-Vu u0");
    if (!(sigma_ > 0.0) || !(tau_ > 0.0)) throw ParameterError("Condat-Vu: step sizes must be positive");
  }

  const PrimalDualState& state() const noexcept { return s_; }

  double step() {
    Vector u_next = prox_(Vector(s_.u + sigma_ * L_.apply(s_.x)));
    Vector x_next = s_.x - tau_ * grad_(s_.x) - tau_ * L_.adjoint_apply(Vector(2.0 * u_next - s_.u));
    const double res = std::sqrt((x_next - s_.x).squaredNorm() + (u_next - s_.u).squaredNorm());
    s_.x = std::move(x_next);
    s_.u = std::move(u_next);
    return res;
  }

 private:
  Grad grad_;
  DualProx prox_;
  const LinearMap& L_;
  double sigma_;
  double tau_;
  PrimalDualState s_;
};

struct PdResult {
  Vector x;
  Vector u;
  SolverTrace trace;
};

namespace detail {

/// Shared driver: steps until the joint residual is ≤ stop_tol·(1 + ‖(x,u)‖)
/// (disabled when stop_tol ≤ 0) or max_iter steps.
template <class Stepper>
PdResult drive_primal_dual(Stepper& stepper, int max_iter, double stop_tol, int stride, const Objective& objective,
                           const char* who) {
  const auto t0 = Clock::now();
  SolverTrace trace;
  trace.stride = stride;
  for (int k = 0; k < max_iter; ++k) {
    const double scale = 1.0 + std::sqrt(stepper.state().x.squaredNorm() + stepper.state().u.squaredNorm());
    const double res = stepper.step();
    const auto& s = stepper.state();
    if (diverged(s.x) || diverged(s.u)) {
      trace.iterations = k;
      trace.wall_seconds = seconds_since(t0);
      throw DivergenceError(std::string(who) + ": iterate diverged at iteration " + std::to_string(k),
                            std::move(trace));
    }
    trace.record(k, res, objective ? objective(s.x) : nan(), s.x);
    trace.iterations = k + 1;
    if (stop_tol > 0.0 && res <= stop_tol * scale) {
      trace.stop = StopReason::Converged;
      break;
    }
  }
  trace.wall_seconds = seconds_since(t0);
  return {stepper.state().x, stepper.state().u, std::move(trace)};
}

}  // namespace detail

inline PdResult run_pd_molgrad(const PdConfig& cfg, const Vector& x0, const Vector& u0) {
  cfg.validate();
  require_finite(x0, "run_pd_molgrad x0");
  require_finite(u0, "run_pd_molgrad u0");
  PdMolgradStepper stepper(cfg, {x0, u0});
  return detail::drive_primal_dual(stepper, cfg.max_iter, cfg.stop_tol, cfg.snapshot_stride, cfg.objective,
                                   "run_pd_molgrad");
}

/// prox_{σg*} for g = λ_g‖·‖₁, via Moreau's decomposition
/// prox_{σg*}(v) = v − σ·prox_{g/σ}(v/σ) = v − σ·soft(v/σ, λ_g/σ).
inline auto l1_dual_prox(double sigma, double lambda_g) {
  return [sigma, lambda_g](const Vector& v) -> Vector { return v - sigma * soft(Vector(v / sigma), lambda_g / sigma); };
}

struct CondatVuOptions {
  int max_iter = 10'000;
  double stop_tol = 0.0;
  int snapshot_stride = 10;
  Objective objective;
};

/// Condat–Vũ form II on min_x h(x) + λ_g‖Lx‖₁.
template <class Grad>
PdResult run_condat_vu_form2(Grad grad_h, double lambda_g, const LinearMap& L, double sigma, double tau,
                             const Vector& x0, const Vector& u0, const CondatVuOptions& opt = {}) {
  if (!(lambda_g >= 0.0)) throw ParameterError("Condat-Vu: lambda_g must be nonnegative");
  auto prox = [sigma, lambda_g](const Vector& v) -> Vector {
    if (lambda_g == 0.0) return Vector::Zero(v.size());
    return l1_dual_prox(sigma, lambda_g)(v);
  };
  CondatVuStepper stepper(std::move(grad_h), prox, L, sigma, tau, {x0, u0});
  return detail::drive_primal_dual(stepper, opt.max_iter, opt.stop_tol, opt.snapshot_stride, opt.objective,
                                   "run_condat_vu_form2");
}

/// Condat–Vũ form II with an arbitrary dual prox.
template <class Grad, class DualProx>
PdResult run_condat_vu_form2_generic(Grad grad_h, DualProx dual_prox, const LinearMap& L, double sigma, double tau,
                                     const Vector& x0, const Vector& u0, const CondatVuOptions& opt = {}) {
  CondatVuStepper stepper(std::move(grad_h), std::move(dual_prox), L, sigma, tau, {x0, u0});
  return detail::drive_primal_dual(stepper, opt.max_iter, opt.stop_tol, opt.snapshot_stride, opt.objective,
                                   "run_condat_vu_form2");
}

// ---------------------------------------------------------------------------
// Heuristic plug-in: Condat–Vũ applied directly to f + μ⁻¹φᴹᶜ_{λ₂}(L·) with
// prox_{σg*} replaced by Id − σ·firm_{1/(μσ), λ₂}(·/σ). No convergence
// guarantee.

struct HeuristicConfig {
  double sigma = 0.2;
  double tau = 0.0;
  double mu = 1.0;
  double lambda2 = 5.0;
  LinearMap L;
  std::shared_ptr<const QuadraticFidelity> fidelity;
  int max_iter = 10'000;
  double stop_tol = 0.0;
  int snapshot_stride = 10;
  Objective objective;

  HeuristicConfig(double sigma_, double tau_, double mu_, double lambda2_, LinearMap L_,
                  std::shared_ptr<const QuadraticFidelity> fidelity_)
      : sigma(sigma_), tau(tau_), mu(mu_), lambda2(lambda2_), L(std::move(L_)), fidelity(std::move(fidelity_)) {}

  /// Threshold 1/(μσ) of the plugged-in firm operator.
  double lambda1() const noexcept { return 1.0 / (mu * sigma); }

  void validate() const {
    if (!fidelity) throw InputError("HeuristicConfig: missing fidelity");
    require_dim(L.input_dim(), fidelity->dim(), "HeuristicConfig L");
    if (!(sigma > 0.0) || !(tau > 0.0) || !(mu > 0.0))
      throw ConfigError("heuristic configuration", "sigma, tau and mu must be positive");
    if (!(lambda1() < lambda2))
      throw ConfigError("heuristic configuration", "1/(mu*sigma) = " + std::to_string(lambda1()) +
                                                       " must be < lambda2 = " + std::to_string(lambda2));
  }

  auto dual_prox() const {
    return [s = sigma, p = ShrinkageParams{lambda1(), lambda2}](const Vector& v) -> Vector {
      return v - s * firm(Vector(v / s), p);
    };
  }

  auto gradient() const {
    return [f = fidelity](const Vector& x) { return f->gradient(x); };
  }
};

inline PdResult run_pd_heuristic(const HeuristicConfig& cfg, const Vector& x0, const Vector& u0) {
  cfg.validate();
  CondatVuStepper stepper(cfg.gradient(), cfg.dual_prox(), cfg.L, cfg.sigma, cfg.tau, {x0, u0});
  return detail::drive_primal_dual(stepper, cfg.max_iter, cfg.stop_tol, cfg.snapshot_stride, cfg.objective,
                                   "run_pd_heuristic");
}

/// f(x) + weight·φ(Lx).
inline double implicit_objective(const Vector& x, const QuadraticFidelity& fidelity, const LinearMap& L,
                                 const Penalty& penalty, double weight) {
  const double p = penalty(L.apply(x));
  return fidelity.value(x) + (weight == 0.0 ? 0.0 : weight * p);
}

}  // namespace molgrad
