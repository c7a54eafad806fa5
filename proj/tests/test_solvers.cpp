#include <gtest/gtest.h>

#include <sstream>

#include "molgrad/experiments.hpp"
#include "support.hpp"

using namespace molgrad;
using molgrad::test::random_matrix;
using molgrad::test::random_vector;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

std::shared_ptr<const QuadraticFidelity> denoising_fidelity(const Vector& y) {
  return std::make_shared<QuadraticFidelity>(Matrix::Identity(y.size(), y.size()), y);
}

std::string condition_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.condition();
  }
  return "";
}

}  // namespace

TEST(Fbs, OneStepL1Prox) {
  const auto f = denoising_fidelity(vec({2.0, 0.5}));
  FbsConfig cfg(1.0, soft_denoiser(1.0), f);
  const auto r = run_fbs(cfg, Vector::Zero(2));
  EXPECT_EQ(r.trace.residual.size(), 2u);
  EXPECT_EQ(r.trace.residual.back(), 0.0);
  EXPECT_EQ(r.x, vec({1.0, 0.0}));
  EXPECT_EQ(r.trace.stop, StopReason::Converged);
}

TEST(Fbs, FixedPointStopsImmediately) {
  const auto f = denoising_fidelity(vec({2.0, 0.5}));
  FbsConfig cfg(1.0, soft_denoiser(1.0), f);
  const auto r = run_fbs(cfg, vec({1.0, 0.0}));
  EXPECT_EQ(r.trace.iterations, 0);
  ASSERT_EQ(r.trace.residual.size(), 1u);
  EXPECT_EQ(r.trace.residual[0], 0.0);
}

TEST(Fbs, FirmScalarGridCertificate) {
  const auto f = denoising_fidelity(vec({3.0}));
  const ShrinkageParams p{1.0, 2.0};
  FbsConfig cfg(1.0, firm_denoiser(p), f);
  const auto r = run_fbs(cfg, vec({0.0}));
  EXPECT_NEAR(r.x[0], 3.0, 1e-12);
  EXPECT_LE(std::abs(r.x[0] - cfg.step(r.x)[0]), cfg.stop_tol());
  auto objective = [&](double x) { return f->value(vec({x})) + p.lambda1 * mc_penalty(x, p.lambda2); };
  const double at = objective(r.x[0]);
  for (int i = -1000; i <= 1000; ++i) EXPECT_LE(at, objective(r.x[0] + i * 1e-3) + 1e-15);
}

TEST(Fbs, AcceptedRunsSatisfyFixedPointResidual) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix A = random_matrix(80, 5, gen, 1.0 / std::sqrt(80.0));
    const Vector y = random_vector(80, gen, 2.0);
    const auto f = std::make_shared<QuadraticFidelity>(A, y);
    const auto T = firm_denoiser({0.1, 2.0});
    const double lo = (1.0 - T.beta()) / f->rho(), hi = (1.0 + T.beta()) / f->kappa();
    ASSERT_TRUE(in_fbs_window(0.5 * (lo + hi), T.beta(), f->rho(), f->kappa()));
    FbsConfig cfg(0.5 * (lo + hi), T, f, 100'000, 1e-10);
    const auto r = run_fbs(cfg, Vector::Zero(5));
    ASSERT_EQ(r.trace.stop, StopReason::Converged);
    EXPECT_LE((r.x - cfg.step(r.x)).norm(), 2.0 * cfg.stop_tol() * (1.0 + r.x.norm()));
  }
}

TEST(Fbs, WindowBoundaryGrid) {
  std::mt19937_64 gen(32);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double rho = 0.1 + U(gen);
    const double kappa = rho * (1.0 + 3.0 * U(gen));
    const double binf = (kappa - rho) / (kappa + rho);
    const double beta = binf + (1.0 - binf) * (0.05 + 0.9 * U(gen));
    const double lo = (1.0 - beta) / rho, hi = (1.0 + beta) / kappa;
    const double eps = std::min(1e-6, 0.25 * (hi - lo));
    EXPECT_FALSE(in_fbs_window(lo - eps, beta, rho, kappa));
    EXPECT_TRUE(in_fbs_window(lo, beta, rho, kappa));
    EXPECT_TRUE(in_fbs_window(lo + eps, beta, rho, kappa));
    EXPECT_TRUE(in_fbs_window(hi - eps, beta, rho, kappa));
    EXPECT_FALSE(in_fbs_window(hi, beta, rho, kappa));
    EXPECT_FALSE(in_fbs_window(hi + eps, beta, rho, kappa));
    EXPECT_FALSE(in_fbs_window(0.5 * (lo + hi), binf, rho, kappa));
    EXPECT_FALSE(in_fbs_window(0.5 * (lo + hi), 1.0, rho, kappa));
  }
}

TEST(Fbs, EqualConstantsAccepted) {
  EXPECT_TRUE(in_fbs_window(1.0, 0.3, 1.0, 1.0));
  EXPECT_TRUE(in_fbs_window(0.7, 0.3, 1.0, 1.0));
  EXPECT_FALSE(in_fbs_window(0.69, 0.3, 1.0, 1.0));
}

TEST(Fbs, WindowViolationNamesCondition) {
  const auto f = denoising_fidelity(vec({1.0}));
  EXPECT_EQ(condition_of([&] { FbsConfig(2.0, firm_denoiser({1.0, 2.0}), f); }), kFbsWindow);
}

TEST(Fbs, DivergenceCarriesTrace) {
  const auto f = denoising_fidelity(vec({1.0}));
  Denoiser blowup("blowup", 0.99, [](const Vector& x) -> Vector { return 1e3 * x + Vector::Ones(x.size()); });
  FbsConfig cfg(0.5, blowup, f, 1000, 0.0);
  try {
    run_fbs(cfg, vec({0.0}));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.trace().size(), 0u);
  }
}

TEST(PdParams, RemarkExample) {
  const auto p = derive_pd_params(1.0, 2.0, 3.0, 0.5, 1.0, 0.9);
  EXPECT_NEAR(p.sigma, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.tau, 0.45, 1e-15);
}

TEST(PdParams, FirmParametrization) {
  const double rho = 0.3, l2 = 3.9;
  for (const ShrinkageParams q : {ShrinkageParams{2.5, 5}, ShrinkageParams{1.5, 5}, ShrinkageParams{1, 10}}) {
    const auto p = derive_pd_params(rho, 2.0, l2, q.beta(), 1.0, 0.9);
    EXPECT_NEAR(p.sigma, rho / l2 * (q.lambda2 / q.lambda1 - 1.0), 1e-14);
  }
}

TEST(PdParams, GammaSetsConditionTwo) {
  for (double gamma : {0.5, 0.9, 0.999999}) {
    const auto p = derive_pd_params(0.7, 2.3, 3.6, 0.4, 0.8, gamma);
    EXPECT_NEAR(p.tau * (p.sigma * 3.6 + 0.5 * 2.3), gamma, 1e-14);
  }
}

TEST(PdParams, RejectsBetaOne) {
  EXPECT_THROW(derive_pd_params(1.0, 2.0, 3.0, 1.0), ParameterError);
  EXPECT_THROW(derive_pd_params(1.0, 2.0, 3.0, 0.5, 1.5), ParameterError);
  EXPECT_THROW(derive_pd_params(1.0, 2.0, 3.0, 0.5, 1.0, 1.0), ParameterError);
}

TEST(PdConfig, RejectsExactlyOutsideConditions) {
  const auto f = denoising_fidelity(vec({1.0, 2.0, 3.0, 4.0}));
  const auto D = difference_operator(4);
  const auto T = firm_denoiser({1.0, 2.0});
  const double l2 = std::pow(norm_bound(D), 2);
  const double bound = pd_sigma_bound(1.0, l2, T.beta());
  auto make = [&](double sigma, double tau) {
    PdConfig c(sigma, tau, D, 1.0, 1.0, T, f);
    c.validate();
  };
  const double tau_ok = 0.99 / (bound * l2 + 0.5);
  EXPECT_EQ(condition_of([&] { make(bound, tau_ok); }), "");
  EXPECT_EQ(condition_of([&] { make(bound * (1.0 + 5e-13), tau_ok); }), "");
  EXPECT_EQ(condition_of([&] { make(bound * (1.0 + 1e-11), tau_ok); }), kPdConditionI);
  const double s = 0.5 * bound;
  const double tau_edge = 1.0 / (s * l2 + 0.5);
  EXPECT_EQ(condition_of([&] { make(s, tau_edge * (1.0 - 1e-12)); }), "");
  EXPECT_EQ(condition_of([&] { make(s, tau_edge); }), kPdConditionII);
  EXPECT_EQ(condition_of([&] { make(s, tau_edge * 1.01); }), kPdConditionII);
}

TEST(PdConfig, ClassicalDenoiserSkipsConditionOne) {
  const auto f = denoising_fidelity(vec({1.0, 2.0, 3.0}));
  PdConfig c(100.0, 1e-4, difference_operator(3), 1.0, 1.0, soft_denoiser(1.0), f);
  EXPECT_NO_THROW(c.validate());
}

TEST(PrimalDual, DegenerateDenoiserSmoke) {
  std::mt19937_64 gen(33);
  const Matrix A = random_matrix(24, 6, gen, 1.0 / std::sqrt(24.0));
  const auto f = std::make_shared<QuadraticFidelity>(A, random_vector(24, gen), difference_operator(6));
  PdConfig c(0.5, 0.0, difference_operator(6), f->rho(), f->kappa_fhat(), soft_denoiser(1e12), f);
  c.tau = 0.9 / (c.sigma * c.l_norm_sq() + 0.5 * c.kappa);
  c.max_iter = 100;
  c.stop_tol = 0.0;
  const auto r = run_pd_molgrad(c, Vector::Zero(6), Vector::Zero(5));
  EXPECT_TRUE(r.x.allFinite());
  EXPECT_TRUE(r.u.allFinite());
  EXPECT_EQ(r.trace.iterations, 100);
}

TEST(PrimalDual, EqualsGenericCondatVuUnderSubstitution) {
  std::mt19937_64 gen(34);
  const Eigen::Index n = 12;
  const Matrix A = random_matrix(48, n, gen, 1.0 / std::sqrt(48.0));
  const auto D = difference_operator(n);
  const auto f = std::make_shared<QuadraticFidelity>(A, random_vector(48, gen), D);
  const ShrinkageParams p{1.0, 3.0};
  const auto [sigma, tau] = derive_pd_params(f->rho(), f->kappa_fhat(), std::pow(norm_bound(D), 2), p.beta());
  PdConfig cfg(sigma, tau, D, f->rho(), f->kappa_fhat(), firm_denoiser(p), f);
  cfg.validate();

  const double shift = cfg.rho / cfg.l_norm_sq();
  auto grad_fhat = [&](const Vector& x) -> Vector { return f->gradient(x) - shift * D.gram_apply(x); };
  auto dual_prox = [&](const Vector& v) -> Vector {
    return v - cfg.sigma * cfg.denoiser(Vector(v / (cfg.sigma + shift)));
  };
  const PrimalDualState init{random_vector(n, gen), random_vector(n - 1, gen)};
  PdMolgradStepper a(cfg, init);
  CondatVuStepper b(grad_fhat, dual_prox, D, sigma, tau, init);
  for (int k = 0; k < 500; ++k) {
    a.step();
    b.step();
    const double scale = 1.0 + a.state().x.norm() + a.state().u.norm();
    ASSERT_LE((a.state().x - b.state().x).norm(), 1e-12 * scale) << k;
    ASSERT_LE((a.state().u - b.state().u).norm(), 1e-12 * scale) << k;
  }
}

TEST(PrimalDual, Lambda1Independence) {
  const auto inst = generate_problem(64, 256, {}, {}, 3);
  const TvSetup s(inst);
  std::vector<Vector> xs;
  for (double l1 : {1.5, 2.5}) {
    const ShrinkageParams p{l1, 5.0};
    const auto [sigma, tau] = derive_pd_params(s.constants.rho, s.constants.kappa_fhat, s.l_norm_sq, p.beta());
    PdConfig cfg(sigma, tau, s.D, s.constants.rho, s.constants.kappa_fhat, firm_denoiser(p), s.fidelity);
    cfg.max_iter = 10'000;
    cfg.stop_tol = 0.0;
    cfg.snapshot_stride = 0;
    xs.push_back(run_pd_molgrad(cfg, Vector::Zero(64), Vector::Zero(63)).x);
  }
  EXPECT_LE((xs[0] - xs[1]).norm() / xs[1].norm(), 1e-6);
}

TEST(CondatVu, LassoDenoisingIsSoftThreshold) {
  std::mt19937_64 gen(35);
  const Vector y = random_vector(10, gen, 2.0);
  const auto L = LinearMap::scaled_identity(1.0, 10);
  CondatVuOptions opt;
  opt.max_iter = 5000;
  const auto r = run_condat_vu_form2([&y](const Vector& x) -> Vector { return x - y; }, 0.7, L, 1.0, 0.6,
                                     Vector::Zero(10), Vector::Zero(10), opt);
  EXPECT_LE((r.x - soft(y, 0.7)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CondatVu, ZeroProblemIsStationary) {
  const Vector x0 = vec({1.0, -2.0, 3.0});
  CondatVuOptions opt;
  opt.max_iter = 50;
  const auto r = run_condat_vu_form2([](const Vector& x) -> Vector { return Vector::Zero(x.size()); }, 0.0,
                                     difference_operator(3), 0.5, 0.5, x0, Vector::Zero(2), opt);
  EXPECT_EQ(r.x, x0);
}

TEST(Heuristic, RejectsInvalidThresholds) {
  const auto f = denoising_fidelity(vec({1.0, 2.0, 3.0}));
  HeuristicConfig h(0.2, 0.1, 1.0, 5.0, difference_operator(3), f);
  EXPECT_THROW(h.validate(), ConfigError);
  h.mu = 2.0;
  EXPECT_NO_THROW(h.validate());
}

TEST(Heuristic, NearHardThresholdCompletes) {
  const auto inst = generate_problem(32, 128, {}, {}, 5);
  const TvSetup s(inst);
  const double lambda2 = 5.0, sigma = 0.2;
  const double mu = 1.0 / (sigma * (lambda2 - 1e-9));
  HeuristicConfig h(sigma, 0.0, mu, lambda2, s.D, s.fidelity);
  h.tau = 0.9 / (sigma * s.l_norm_sq + 0.5 * s.constants.kappa);
  h.max_iter = 2000;
  const auto r = run_pd_heuristic(h, Vector::Zero(32), Vector::Zero(31));
  EXPECT_TRUE(r.x.allFinite());
  EXPECT_TRUE(r.u.allFinite());
}

TEST(Heuristic, Deterministic) {
  const auto inst = generate_problem(32, 128, {}, {}, 6);
  const TvSetup s(inst);
  HeuristicConfig h(0.2, 0.0, s.l_norm_sq / (s.constants.rho * 5.0), 5.0, s.D, s.fidelity);
  h.tau = 0.9 / (0.2 * s.l_norm_sq + 0.5 * s.constants.kappa);
  h.max_iter = 500;
  const auto a = run_pd_heuristic(h, Vector::Zero(32), Vector::Zero(31));
  const auto b = run_pd_heuristic(h, Vector::Zero(32), Vector::Zero(31));
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.trace.residual, b.trace.residual);
}

TEST(Objective, ZeroNoiseZeroWeight) {
  std::mt19937_64 gen(36);
  const Matrix A = random_matrix(20, 5, gen);
  const Vector x = random_vector(5, gen);
  const QuadraticFidelity f(A, A * x);
  EXPECT_NEAR(implicit_objective(x, f, difference_operator(5), firm_penalty({1.0, 2.0}), 0.0), 0.0, 1e-24);
}

TEST(Objective, MonitoredAlongPrimalDualRun) {
  const auto inst = generate_problem(32, 128, {}, {}, 7);
  const TvSetup s(inst);
  const ShrinkageParams p{2.5, 5.0};
  const auto [sigma, tau] = derive_pd_params(s.constants.rho, s.constants.kappa_fhat, s.l_norm_sq, p.beta());
  PdConfig cfg(sigma, tau, s.D, s.constants.rho, s.constants.kappa_fhat, firm_denoiser(p), s.fidelity);
  const double weight = (sigma + s.constants.rho / s.l_norm_sq) * p.lambda1;
  const Penalty mc = Penalty::separable("mc", 1.0 / p.lambda2, [&](double t) { return mc_penalty(t, p.lambda2); });
  cfg.objective = [&](const Vector& x) { return implicit_objective(x, *s.fidelity, s.D, mc, weight); };
  cfg.max_iter = 2000;
  cfg.stop_tol = 0.0;
  const auto r = run_pd_molgrad(cfg, Vector::Zero(32), Vector::Zero(31));
  ASSERT_EQ(r.trace.objective.size(), 2000u);
  for (double v : r.trace.objective) EXPECT_TRUE(std::isfinite(v));
  EXPECT_LE(r.trace.objective.back(), r.trace.objective.front());
}

TEST(Trace, CsvColumns) {
  SolverTrace t;
  t.record(0, 1.5, 2.0, Vector::Zero(1));
  t.record(1, 0.25, 1.0, Vector::Zero(1));
  std::stringstream plain;
  t.write_csv(plain);
  EXPECT_EQ(plain.str(), "iter,residual,objective\n0,1.5,2\n1,0.25,1\n");
  t.discrepancy = {0.5, 0.125};
  std::stringstream with;
  t.write_csv(with);
  EXPECT_EQ(with.str(), "iter,residual,objective,discrepancy\n0,1.5,2,0.5\n1,0.25,1,0.125\n");
}
