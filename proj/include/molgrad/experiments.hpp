#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "molgrad/solvers.hpp"

namespace molgrad {

// ---------------------------------------------------------------------------
// Problem generation

/// Deterministic sub-seed for an independent random stream (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct SignalSpec {
  int n_pieces = 8;
  double level_lo = -2.0;
  double level_hi = 2.0;
};

/// Piecewise-constant signal: n_pieces segments with distinct sorted
/// breakpoints and uniform levels. Adjacent levels differ by at least 10% of
/// the level range so every breakpoint is a visible jump.
inline Vector generate_piecewise_signal(Eigen::Index n, int n_pieces, double level_lo, double level_hi,
                                        std::uint64_t seed) {
  if (n < 1) throw InputError("signal: n must be positive");
  if (n_pieces < 1 || n_pieces > n) throw InputError("signal: need 1 <= n_pieces <= n");
  if (!(level_hi > level_lo)) throw InputError("signal: need level_lo < level_hi");
  std::mt19937_64 gen(seed);
  std::vector<Eigen::Index> candidates(static_cast<std::size_t>(n - 1));
  std::iota(candidates.begin(), candidates.end(), Eigen::Index{1});
  std::vector<Eigen::Index> breaks;
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(breaks), n_pieces - 1, gen);
  breaks.push_back(n);

  std::uniform_real_distribution<double> level(level_lo, level_hi);
  const double min_jump = 0.1 * (level_hi - level_lo);
  Vector x(n);
  Eigen::Index start = 0;
  double prev = 0.0;
  for (std::size_t p = 0; p < breaks.size(); ++p) {
    double v = level(gen);
    while (p > 0 && std::abs(v - prev) < min_jump) v = level(gen);
    x.segment(start, breaks[p] - start).setConstant(v);
    start = breaks[p];
    prev = v;
  }
  return x;
}

inline Vector generate_piecewise_signal(Eigen::Index n, const SignalSpec& spec, std::uint64_t seed) {
  return generate_piecewise_signal(n, spec.n_pieces, spec.level_lo, spec.level_hi, seed);
}

/// Noise standard deviation, either absolute or relative: value·‖Ax⋄‖/√m.
struct NoiseLevel {
  bool relative = true;
  double value = 0.1;
};

struct ProblemInstance {
  Vector x_true;
  Matrix A;
  double noise_std = 0.0;
  Vector y;
  std::uint64_t seed = 0;
  int regenerations = 0;  ///< redraws of A needed for λ_min(AᵀA) > 0
};

/// y = A x⋄ + ε with A_ij ~ N(0, 1/m) and ε ~ N(0, noise_std²). Requires the
/// overdetermined case m ≥ n.
inline ProblemInstance generate_problem(Eigen::Index n, Eigen::Index m, NoiseLevel noise, const SignalSpec& signal,
                                        std::uint64_t seed) {
  if (n < 2) throw InputError("problem: n must be >= 2");
  if (m < n) throw InputError("problem: overdetermined case m >= n required");
  if (!(noise.value >= 0.0)) throw InputError("problem: noise level must be nonnegative");
  ProblemInstance p;
  p.seed = seed;
  p.x_true = generate_piecewise_signal(n, signal, derive_seed(seed, 0));
  std::normal_distribution<double> normal;
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (int attempt = 0;; ++attempt) {
    std::mt19937_64 gen(derive_seed(seed, 1 + static_cast<std::uint64_t>(attempt)));
    p.A.resize(m, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < m; ++i) p.A(i, j) = scale * normal(gen);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(p.A.transpose() * p.A, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() > 1e-10) {
      p.regenerations = attempt;
      break;
    }
    if (attempt > 100) throw InputError("problem: could not draw a full-rank sensing matrix");
  }
  const Vector clean = p.A * p.x_true;
  p.noise_std = noise.relative ? noise.value * clean.norm() / std::sqrt(static_cast<double>(m)) : noise.value;
  std::mt19937_64 gen(derive_seed(seed, 1000));
  p.y = clean;
  if (p.noise_std > 0.0)
    for (Eigen::Index i = 0; i < m; ++i) p.y[i] += p.noise_std * normal(gen);
  return p;
}

// ---------------------------------------------------------------------------
// Metrics

/// (‖x − x̃‖² + ‖u − ũ‖²)/(‖x‖² + ‖u‖²); 0/0 is defined as 0.
inline double discrepancy(const Vector& x, const Vector& x_ref, const Vector& u, const Vector& u_ref) {
  require_dim(x_ref.size(), x.size(), "discrepancy x");
  require_dim(u_ref.size(), u.size(), "discrepancy u");
  const double num = (x - x_ref).squaredNorm() + (u - u_ref).squaredNorm();
  const double den = x.squaredNorm() + u.squaredNorm();
  if (den == 0.0) {
    if (num == 0.0) return 0.0;
    throw InputError("discrepancy: zero denominator with nonzero numerator");
  }
  return num / den;
}

/// Single-block version ‖v − ṽ‖²/‖v‖², same 0/0 convention.
inline double relative_sq_error(const Vector& v, const Vector& v_ref) {
  return discrepancy(v, v_ref, Vector(), Vector());
}

/// ‖x⋄ − x‖²/‖x⋄‖².
inline double system_mismatch(const Vector& x_true, const Vector& x) {
  require_dim(x.size(), x_true.size(), "system_mismatch");
  const double den = x_true.squaredNorm();
  if (den == 0.0) throw InputError("system_mismatch: x_true must be nonzero");
  return (x_true - x).squaredNorm() / den;
}

// ---------------------------------------------------------------------------
// Shared setup for the difference-operator experiments

struct TvSetup {
  std::shared_ptr<const QuadraticFidelity> fidelity;
  LinearMap D;
  double l_norm_sq;
  FidelityConstants constants;

  explicit TvSetup(const ProblemInstance& p)
      : fidelity(std::make_shared<QuadraticFidelity>(p.A, p.y)),
        D(difference_operator(p.A.cols())),
        l_norm_sq(std::pow(norm_bound(D), 2)),
        constants(fidelity_constants(p.A, D)) {}
};

/// ∇ of h(x) = f(x) − w·env_{λ₂}(‖·‖₁)(Dx): the smooth part of the convex
/// rewrite f + w(‖D·‖₁ − env_{λ₂}(‖·‖₁)(D·)) = f + w·φᴹᶜ_{λ₂}(D·).
inline auto convex_rewrite_gradient(const TvSetup& s, double weight, double lambda2) {
  return [&s, weight, lambda2](const Vector& x) -> Vector {
    return s.fidelity->gradient(x) - weight * s.D.adjoint_apply(moreau_envelope_l1(s.D.apply(x), lambda2).gradient);
  };
}

struct DiscrepancyCurves {
  std::vector<double> joint;
  std::vector<double> x;
  std::vector<double> u;

  void push(const PrimalDualState& a, const PrimalDualState& b) {
    joint.push_back(discrepancy(a.x, b.x, a.u, b.u));
    x.push_back(relative_sq_error(a.x, b.x));
    u.push_back(relative_sq_error(a.u, b.u));
  }
};

/// Over the last tenth of the curve each step may grow by at most a factor
/// 1 + 1e−6, except when both values sit at or below the roundoff `floor`.
inline constexpr double kTrendFloor = 1e-24;

inline bool eventually_non_increasing(const std::vector<double>& d, double floor = kTrendFloor) {
  const std::size_t start = d.size() - d.size() / 10;
  for (std::size_t k = start; k + 1 < d.size(); ++k)
    if (d[k + 1] > std::max(d[k] * (1.0 + 1e-6), floor)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Agreement: the modified primal-dual scheme with firm shrinkage against
// Condat–Vũ on the convex rewrite.

struct AgreementConfig {
  double lambda1 = 2.5;
  double lambda2 = 5.0;
  double delta = 1.0;
  double gamma = 0.9;
  double baseline_sigma = 0.2;
  int iters = 10'000;
};

struct AgreementResult {
  DiscrepancyCurves curves;  ///< index k holds the discrepancy after k iterations
  PrimalDualState molgrad;
  PrimalDualState baseline;
  double sigma = 0.0;
  double tau = 0.0;
  double baseline_tau = 0.0;
  double weight = 0.0;  ///< μ⁻¹ = (σ + ρ/‖D‖²)λ₁, the weight on φᴹᶜ_{λ₂}
  FidelityConstants constants;
};

inline AgreementResult run_agreement_experiment(const ProblemInstance& inst, const AgreementConfig& cfg) {
  if (cfg.iters < 0) throw InputError("agreement: iters must be >= 0");
  const TvSetup s(inst);
  const ShrinkageParams firm_p{cfg.lambda1, cfg.lambda2};
  firm_p.validate();
  const auto [sigma, tau] =
      derive_pd_params(s.constants.rho, s.constants.kappa_fhat, s.l_norm_sq, firm_p.beta(), cfg.delta, cfg.gamma);
  PdConfig pd(sigma, tau, s.D, s.constants.rho, s.constants.kappa_fhat, firm_denoiser(firm_p), s.fidelity);
  pd.validate();

  AgreementResult r;
  r.sigma = sigma;
  r.tau = tau;
  r.constants = s.constants;
  r.weight = (sigma + s.constants.rho / s.l_norm_sq) * cfg.lambda1;
  // ∇h is at most λ_max(AᵀA)-Lipschitz: the envelope term is concave.
  r.baseline_tau = cfg.gamma / (cfg.baseline_sigma * s.l_norm_sq + 0.5 * s.constants.kappa);

  const Eigen::Index n = inst.A.cols();
  const PrimalDualState init{Vector::Zero(n), Vector::Zero(n - 1)};
  PdMolgradStepper alg(pd, init);
  CondatVuStepper base(convex_rewrite_gradient(s, r.weight, cfg.lambda2), l1_dual_prox(cfg.baseline_sigma, r.weight),
                       s.D, cfg.baseline_sigma, r.baseline_tau, init);
  r.curves.push(alg.state(), base.state());
  for (int k = 0; k < cfg.iters; ++k) {
    alg.step();
    base.step();
    if (detail::diverged(alg.state().x) || detail::diverged(base.state().x))
      throw DivergenceError("agreement: iterate diverged at iteration " + std::to_string(k), {});
    r.curves.push(alg.state(), base.state());
  }
  r.molgrad = alg.state();
  r.baseline = base.state();
  return r;
}

// ---------------------------------------------------------------------------
// Disagreement: the heuristic firm plug-in against the same baseline.

enum class HeuristicTau { Recompute, KeepFromMolgrad };

struct DisagreementConfig {
  double lambda1 = 2.5;  ///< only used to reproduce the primal-dual τ in KeepFromMolgrad mode
  double lambda2 = 5.0;
  double mu = 0.0;  ///< 0 selects ‖D‖²/(ρλ₂), the δ = 1 weight
  double sigma = 0.2;
  double baseline_sigma = 0.2;
  double gamma = 0.9;
  HeuristicTau tau_mode = HeuristicTau::Recompute;
  int iters = 10'000;
};

struct DisagreementResult {
  DiscrepancyCurves curves;
  PrimalDualState heuristic;
  PrimalDualState baseline;
  double mu = 0.0;
  double tau = 0.0;
  double baseline_tau = 0.0;
  double lambda1_effective = 0.0;  ///< 1/(μσ)
};

inline DisagreementResult run_disagreement_experiment(const ProblemInstance& inst, const DisagreementConfig& cfg) {
  if (cfg.iters < 0) throw InputError("disagreement: iters must be >= 0");
  const TvSetup s(inst);
  DisagreementResult r;
  r.mu = cfg.mu > 0.0 ? cfg.mu : s.l_norm_sq / (s.constants.rho * cfg.lambda2);
  if (cfg.tau_mode == HeuristicTau::Recompute) {
    r.tau = cfg.gamma / (cfg.sigma * s.l_norm_sq + 0.5 * s.constants.kappa);
  } else {
    const ShrinkageParams p{cfg.lambda1, cfg.lambda2};
    p.validate();
    r.tau = derive_pd_params(s.constants.rho, s.constants.kappa_fhat, s.l_norm_sq, p.beta(), 1.0, cfg.gamma).tau;
  }
  r.baseline_tau = cfg.gamma / (cfg.baseline_sigma * s.l_norm_sq + 0.5 * s.constants.kappa);
  HeuristicConfig h(cfg.sigma, r.tau, r.mu, cfg.lambda2, s.D, s.fidelity);
  h.validate();
  r.lambda1_effective = h.lambda1();

  const Eigen::Index n = inst.A.cols();
  const PrimalDualState init{Vector::Zero(n), Vector::Zero(n - 1)};
  const double weight = 1.0 / r.mu;
  CondatVuStepper heur(h.gradient(), h.dual_prox(), h.L, h.sigma, h.tau, init);
  CondatVuStepper base(convex_rewrite_gradient(s, weight, cfg.lambda2), l1_dual_prox(cfg.baseline_sigma, weight), s.D,
                       cfg.baseline_sigma, r.baseline_tau, init);
  r.curves.push(heur.state(), base.state());
  for (int k = 0; k < cfg.iters; ++k) {
    heur.step();
    base.step();
    if (detail::diverged(heur.state().x) || detail::diverged(base.state().x))
      throw DivergenceError("disagreement: iterate diverged at iteration " + std::to_string(k), {});
    r.curves.push(heur.state(), base.state());
  }
  r.heuristic = heur.state();
  r.baseline = base.state();
  return r;
}

// ---------------------------------------------------------------------------
// Firm versus ℓ1 sweep

/// 10^a, 10^(a+step), ..., up to 10^b inclusive.
inline std::vector<double> log_grid(double a, double b, double step) {
  if (!(step > 0.0) || !(b >= a)) throw InputError("log_grid: need step > 0 and b >= a");
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((b - a) / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(std::pow(10.0, a + step * i));
  return g;
}

inline std::vector<double> default_firm_lambda2_grid() { return log_grid(-1.0, 2.0, 0.25); }
inline std::vector<double> default_l1_mu_grid() { return log_grid(-1.0, 3.0, 0.25); }

struct SweepConfig {
  Eigen::Index n = 64;
  Eigen::Index m = 256;
  NoiseLevel noise{};
  SignalSpec signal{};
  int n_trials = 30;
  std::uint64_t seed = 1;
  std::vector<double> firm_lambda2_grid = default_firm_lambda2_grid();  ///< firm branch, δ = 1
  std::vector<double> l1_mu_grid = default_l1_mu_grid();                ///< ℓ1 branch: μf + ‖D·‖₁
  int iters = 5000;
  double gamma = 0.9;
  unsigned threads = 0;  ///< 0: hardware concurrency
};

struct SweepResult {
  std::vector<double> grid;
  std::vector<std::vector<double>> mismatch;  ///< [trial][grid index]
  std::vector<double> mean;
  int trials = 0;

  double best_mean() const { return mean.empty() ? kInfinity : *std::min_element(mean.begin(), mean.end()); }
  std::size_t best_index() const {
    return static_cast<std::size_t>(std::min_element(mean.begin(), mean.end()) - mean.begin());
  }
};

struct SweepOutcome {
  SweepResult firm;
  SweepResult l1;
  bool complete = true;
  std::string error;  ///< first failure when incomplete
};

inline void validate_grid(const std::vector<double>& g, const char* what) {
  if (g.empty()) throw InputError(std::string(what) + ": grid must be nonempty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0)) throw InputError(std::string(what) + ": grid values must be positive");
    if (i > 0 && !(g[i] > g[i - 1])) throw InputError(std::string(what) + ": grid must be strictly increasing");
  }
}

/// Terminal system mismatch of the modified primal-dual scheme with firm
/// shrinkage at δ = 1 (λ₁ = λ₂/2; the solution does not depend on λ₁).
inline double firm_branch_mismatch(const ProblemInstance& inst, const TvSetup& s, double lambda2, int iters,
                                   double gamma) {
  const ShrinkageParams p{0.5 * lambda2, lambda2};
  const auto [sigma, tau] = derive_pd_params(s.constants.rho, s.constants.kappa_fhat, s.l_norm_sq, p.beta(), 1.0, gamma);
  PdConfig cfg(sigma, tau, s.D, s.constants.rho, s.constants.kappa_fhat, firm_denoiser(p), s.fidelity);
  cfg.max_iter = iters;
  cfg.stop_tol = 0.0;
  cfg.snapshot_stride = 0;
  const Eigen::Index n = inst.A.cols();
  auto r = run_pd_molgrad(cfg, Vector::Zero(n), Vector::Zero(n - 1));
  return system_mismatch(inst.x_true, r.x);
}

/// Terminal system mismatch of Condat–Vũ on f + μ⁻¹‖D·‖₁ (the minimizer of
/// μf + ‖D·‖₁). The dual step balances σ‖D‖² against κ/2.
inline double l1_branch_mismatch(const ProblemInstance& inst, const TvSetup& s, double mu, int iters, double gamma) {
  const double sigma = 0.5 * s.constants.kappa / s.l_norm_sq;
  const double tau = gamma / (sigma * s.l_norm_sq + 0.5 * s.constants.kappa);
  const Eigen::Index n = inst.A.cols();
  CondatVuOptions opt;
  opt.max_iter = iters;
  opt.snapshot_stride = 0;
  auto r = run_condat_vu_form2([&s](const Vector& x) { return s.fidelity->gradient(x); }, 1.0 / mu, s.D, sigma, tau,
                               Vector::Zero(n), Vector::Zero(n - 1), opt);
  return system_mismatch(inst.x_true, r.x);
}

/// Trial t uses problem seed (seed XOR t). Trials run concurrently; means are
/// summed in ascending trial order so results do not depend on scheduling.
inline SweepOutcome run_sweep(const SweepConfig& cfg) {
  if (cfg.n_trials < 1) throw InputError("sweep: n_trials must be >= 1");
  validate_grid(cfg.firm_lambda2_grid, "sweep firm");
  validate_grid(cfg.l1_mu_grid, "sweep l1");

  struct TrialOut {
    std::vector<double> firm, l1;
    std::string error;
  };
  auto run_trial = [&cfg](int t) {
    TrialOut out;
    try {
      const auto inst = generate_problem(cfg.n, cfg.m, cfg.noise, cfg.signal, cfg.seed ^ static_cast<std::uint64_t>(t));
      const TvSetup s(inst);
      for (double l2 : cfg.firm_lambda2_grid) out.firm.push_back(firm_branch_mismatch(inst, s, l2, cfg.iters, cfg.gamma));
      for (double mu : cfg.l1_mu_grid) out.l1.push_back(l1_branch_mismatch(inst, s, mu, cfg.iters, cfg.gamma));
    } catch (const std::exception& e) {
      out.error = "trial " + std::to_string(t) + ": " + e.what();
    }
    return out;
  };

  std::vector<TrialOut> trials(static_cast<std::size_t>(cfg.n_trials));
  const unsigned threads = std::max(1u, cfg.threads ? cfg.threads : std::thread::hardware_concurrency());
  for (int base = 0; base < cfg.n_trials; base += static_cast<int>(threads)) {
    std::vector<std::future<TrialOut>> batch;
    const int end = std::min(cfg.n_trials, base + static_cast<int>(threads));
    for (int t = base; t < end; ++t) batch.push_back(std::async(std::launch::async, run_trial, t));
    for (int t = base; t < end; ++t) trials[static_cast<std::size_t>(t)] = batch[static_cast<std::size_t>(t - base)].get();
  }

  SweepOutcome out;
  out.firm.grid = cfg.firm_lambda2_grid;
  out.l1.grid = cfg.l1_mu_grid;
  for (const auto& t : trials) {
    if (!t.error.empty()) {
      out.complete = false;
      out.error = t.error;
      break;
    }
    out.firm.mismatch.push_back(t.firm);
    out.l1.mismatch.push_back(t.l1);
  }
  for (SweepResult* r : {&out.firm, &out.l1}) {
    r->trials = static_cast<int>(r->mismatch.size());
    r->mean.assign(r->grid.size(), 0.0);
    if (r->trials == 0) continue;
    for (const auto& row : r->mismatch)
      for (std::size_t j = 0; j < row.size(); ++j) r->mean[j] += row[j];
    for (auto& v : r->mean) v /= r->trials;
  }
  return out;
}

}  // namespace molgrad
