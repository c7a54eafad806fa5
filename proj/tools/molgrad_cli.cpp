#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "molgrad/certify.hpp"
#include "molgrad/csv.hpp"
#include "molgrad/denoiser.hpp"
#include "molgrad/experiments.hpp"
#include "molgrad/solvers.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace molgrad;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kFailed = 1, kUsage = 2, kWindow = 3, kDiverged = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string environment_note() {
  std::ostringstream os;
  os << "molgrad " << kVersion << "; Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
     << EIGEN_MINOR_VERSION << "; compiler " << __VERSION__;
  return os.str();
}

// ---------------------------------------------------------------------------
// Config access

const json& entry(const json& c, const std::string& key) {
  if (!c.contains(key) || c.at(key).is_null()) throw UsageError("missing value for '" + key + "'");
  return c.at(key);
}

bool present(const json& c, const std::string& key) { return c.contains(key) && !c.at(key).is_null(); }

double num(const json& c, const std::string& key) {
  const json& v = entry(c, key);
  if (!v.is_number()) throw UsageError("'" + key + "' must be a number");
  return v.get<double>();
}

long long integer(const json& c, const std::string& key) {
  const json& v = entry(c, key);
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) return static_cast<long long>(v.get<double>());
  throw UsageError("'" + key + "' must be an integer");
}

std::string str(const json& c, const std::string& key) {
  const json& v = entry(c, key);
  if (!v.is_string()) throw UsageError("'" + key + "' must be a string");
  return v.get<std::string>();
}

bool boolean(const json& c, const std::string& key) {
  const json& v = entry(c, key);
  if (!v.is_boolean()) throw UsageError("'" + key + "' must be true or false");
  return v.get<bool>();
}

std::vector<double> grid(const json& c, const std::string& key) {
  const json& v = entry(c, key);
  if (!v.is_array()) throw UsageError("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw UsageError("'" + key + "' must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::uint64_t seed_of(const json& c) {
  const json& v = entry(c, "seed");
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
    throw UsageError("'seed' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// Flags: each registered flag writes its config key only when given.

class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    if constexpr (std::is_same_v<T, std::vector<double>>) opt->delimiter(',');
    setters_.push_back([opt, value, key](json& j) {
      if (opt->count()) j[key] = *value;
    });
    return opt;
  }

  json collect() const {
    json j = json::object();
    for (const auto& s : setters_) s(j);
    return j;
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> setters_;
};

void add_problem_flags(FlagSet& f) {
  f.add<long long>("--n", "n", "signal length");
  f.add<long long>("--m", "m", "number of measurements");
  f.add<double>("--noise", "noise", "noise level");
  f.add<std::string>("--noise-mode", "noise_mode", "relative (times ||Ax||/sqrt(m)) or absolute");
  f.add<long long>("--pieces", "pieces", "number of constant pieces");
  f.add<double>("--level-lo", "level_lo", "lowest signal level");
  f.add<double>("--level-hi", "level_hi", "highest signal level");
}

void add_denoiser_param_flags(FlagSet& f) {
  f.add<double>("--lambda", "lambda", "threshold of soft and garrote");
  f.add<double>("--lambda1", "lambda1", "firm threshold");
  f.add<double>("--lambda2", "lambda2", "firm knee");
  f.add<double>("--beta", "beta", "declared cocoercivity of soft");
  f.add<long long>("--group-size", "group_size", "block size of group-firm");
  f.add<std::string>("--weights", "weights", "weight matrix CSV for tied-relu");
}

json problem_defaults() {
  return {{"n", 64},        {"m", 256},        {"noise", 0.1}, {"noise_mode", "relative"},
          {"pieces", 8},    {"level_lo", -2.0}, {"level_hi", 2.0}};
}

json denoiser_defaults(const char* name) {
  return {{"denoiser", name}, {"lambda", nullptr},     {"lambda1", nullptr}, {"lambda2", nullptr},
          {"beta", nullptr},  {"group_size", nullptr}, {"weights", nullptr}};
}

json merged(json a, const json& b) {
  a.update(b);
  return a;
}

// ---------------------------------------------------------------------------
// Builders from a resolved config

ProblemInstance make_problem(const json& c) {
  const std::string mode = str(c, "noise_mode");
  if (mode != "relative" && mode != "absolute") throw UsageError("noise_mode must be 'relative' or 'absolute'");
  const NoiseLevel noise{mode == "relative", num(c, "noise")};
  const SignalSpec signal{static_cast<int>(integer(c, "pieces")), num(c, "level_lo"), num(c, "level_hi")};
  return generate_problem(integer(c, "n"), integer(c, "m"), noise, signal, seed_of(c));
}

struct LoadedProblem {
  Matrix A;
  Vector y;
  std::optional<Vector> x_true;
  double noise_std = 0.0;
};

LoadedProblem load_problem(const json& c) {
  if (present(c, "A") || present(c, "y")) {
    LoadedProblem p{csv::load_matrix(str(c, "A")), csv::load_vector(str(c, "y")), std::nullopt, 0.0};
    return p;
  }
  auto inst = make_problem(c);
  return {std::move(inst.A), std::move(inst.y), std::move(inst.x_true), inst.noise_std};
}

Denoiser make_cli_denoiser(const json& c, Eigen::Index dim) {
  const std::string name = str(c, "denoiser");
  if (name == "tied-relu") {
    const Matrix W = csv::load_matrix(str(c, "weights"));
    if (dim > 0 && W.cols() != dim)
      throw InputError("tied-relu: weight matrix has " + std::to_string(W.cols()) + " columns, expected " +
                       std::to_string(dim));
    return tied_weight_relu_denoiser(W);
  }
  ParamMap params;
  for (const char* key : {"lambda", "lambda1", "lambda2", "beta", "group_size"})
    if (present(c, key)) params[key] = num(c, key);
  return make_denoiser(name, params, dim);
}

/// Dimension used when certifying a denoiser without a fixed one.
Eigen::Index natural_dim(const json& c) {
  if (present(c, "dim")) return integer(c, "dim");
  const std::string name = str(c, "denoiser");
  if (name == "vector-firm") return 2;
  if (name == "group-firm") return present(c, "group_size") ? integer(c, "group_size") : 2;
  if (name == "tied-relu") return 0;
  return 1;
}

// ---------------------------------------------------------------------------
// Output staging: nothing touches the disk until the run has finished.

std::string curve_csv(const std::string& xname, const std::string& yname, const std::vector<double>& ys) {
  std::ostringstream os;
  csv::precise(os);
  os << xname << ',' << yname << '\n';
  for (std::size_t k = 0; k < ys.size(); ++k) os << k << ',' << ys[k] << '\n';
  return os.str();
}

std::string param_curve_csv(const std::string& xname, const std::string& yname, const std::vector<double>& xs,
                            const std::vector<double>& ys) {
  std::ostringstream os;
  csv::precise(os);
  os << xname << ',' << yname << '\n';
  for (std::size_t k = 0; k < xs.size(); ++k) os << xs[k] << ',' << (k < ys.size() ? ys[k] : detail::nan()) << '\n';
  return os.str();
}

std::string vector_csv(const Vector& v) {
  std::ostringstream os;
  csv::write_vector(os, v);
  return os.str();
}

struct Run {
  std::string command;
  json config;
  fs::path dir;
  bool gnuplot = false;
  std::vector<std::pair<std::string, std::string>> files;

  std::string file_name(const std::string& branch, const std::string& ext) const {
    return command + "-" + branch + "-" + std::to_string(seed_of(config)) + ext;
  }

  std::string stage(const std::string& branch, const std::string& ext, std::string content) {
    std::string name = file_name(branch, ext);
    files.emplace_back(name, std::move(content));
    return name;
  }

  void stage_plot(const std::string& body) {
    if (!gnuplot) return;
    std::string script = "set datafile separator ','\nset terminal pngcairo size 900,540\nset output '" + command +
                         "-" + std::to_string(seed_of(config)) + ".png'\n" + body;
    files.emplace_back(command + "-" + std::to_string(seed_of(config)) + ".gp", std::move(script));
  }

  void commit(const json& derived, const std::string& status = "ok") {
    json outputs = json::array();
    for (const auto& f : files) outputs.push_back(f.first);
    const std::string manifest_name = file_name("manifest", ".json");
    outputs.push_back(manifest_name);
    json manifest = {{"command", command},          {"config", config},   {"derived", derived},
                     {"environment", environment_note()}, {"outputs", outputs}, {"status", status}};
    files.emplace_back(manifest_name, manifest.dump(2) + "\n");
    fs::create_directories(dir);
    for (const auto& [name, content] : files) {
      std::ofstream os(dir / name, std::ios::binary);
      if (!os || !(os << content)) throw std::runtime_error("cannot write " + (dir / name).string());
    }
  }
};

std::string plot_curves(const std::vector<std::pair<std::string, std::string>>& curves, const std::string& ylabel,
                        bool logx = false) {
  std::string s = "set logscale y\n";
  if (logx) s += "set logscale x\n";
  s += "set ylabel '" + ylabel + "'\nplot ";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (i) s += ", \\\n     ";
    s += "'" + curves[i].first + "' skip 1 using 1:2 with lines title '" + curves[i].second + "'";
  }
  return s + "\n";
}

// ---------------------------------------------------------------------------
// Commands

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::unique_ptr<FlagSet> flags;
  json defaults;
  json paper_preset;  ///< applied before config and flags when paper_scale is set
  std::function<int(Run&)> body;
};

int cmd_certify(Run& run) {
  json& c = run.config;
  const Eigen::Index dim = natural_dim(c);
  const Denoiser T = make_cli_denoiser(c, dim);
  CertifyOptions opt;
  opt.box = {num(c, "box_lo"), num(c, "box_hi"), T.fixed_dim().value_or(dim)};
  opt.n_pairs = static_cast<int>(integer(c, "pairs"));
  opt.jacobian_probes = static_cast<int>(integer(c, "jacobian_probes"));
  opt.fd_step = num(c, "fd_step");
  opt.seed = seed_of(c);
  if (opt.n_pairs < 1) throw UsageError("'pairs' must be >= 1");
  const auto r = certify(T, opt);
  const double jac_tol = num(c, "jacobian_tol");
  const bool pass = r.pass && r.jacobian_asymmetry <= jac_tol;
  const json report = {{"denoiser", r.denoiser},
                       {"dim", opt.box.dim},
                       {"beta", r.beta},
                       {"lipschitz_estimate", r.lipschitz_estimate},
                       {"lipschitz_bound", 1.0 / r.beta},
                       {"monotone_violations", r.monotonicity.violations},
                       {"monotone_worst_margin", r.monotonicity.worst_margin},
                       {"cocoercive_violations", r.cocoercivity.violations},
                       {"cocoercive_worst_margin", r.cocoercivity.worst_margin},
                       {"pairs", r.monotonicity.pairs},
                       {"jacobian_asymmetry", r.jacobian_asymmetry},
                       {"jacobian_tolerance", jac_tol},
                       {"samples_used", r.samples_used},
                       {"verdict", pass ? "pass" : "fail"}};
  run.stage("report", ".json", report.dump(2) + "\n");
  run.commit({{"dim", opt.box.dim}, {"verdict", report["verdict"]}});
  std::cout << report.dump(2) << '\n';
  return pass ? kOk : kFailed;
}

int cmd_solve_fbs(Run& run) {
  const json& c = run.config;
  const auto p = load_problem(c);
  auto fidelity = std::make_shared<QuadraticFidelity>(p.A, p.y);
  const Denoiser T = make_cli_denoiser(c, fidelity->dim());
  const double lo = (1.0 - T.beta()) / fidelity->rho(), hi = (1.0 + T.beta()) / fidelity->kappa();
  const double mu = present(c, "mu") ? num(c, "mu") : 0.5 * (lo + hi);
  FbsConfig cfg(mu, T, fidelity, static_cast<int>(integer(c, "max_iter")), num(c, "stop_tol"));
  if (const auto& phi = T.induced_penalty()) {
    const Penalty pen = *phi;
    cfg.objective = [fidelity, pen, mu](const Vector& x) { return fidelity->value(x) + pen(x) / mu; };
  }
  const auto r = run_fbs(cfg, Vector::Zero(fidelity->dim()));

  std::ostringstream trace;
  r.trace.write_csv(trace);
  run.stage("trace", ".csv", trace.str());
  run.stage("x", ".csv", vector_csv(r.x));
  run.stage_plot("set xlabel 'iteration'\n" + plot_curves({{run.file_name("trace", ".csv"), "residual"}}, "residual"));
  json derived = {{"beta", T.beta()},
                  {"rho", fidelity->rho()},
                  {"kappa", fidelity->kappa()},
                  {"mu", mu},
                  {"window", {lo, hi}},
                  {"iterations", r.trace.iterations},
                  {"stop", to_string(r.trace.stop)},
                  {"final_residual", r.trace.residual.empty() ? 0.0 : r.trace.residual.back()},
                  {"noise_std", p.noise_std}};
  if (p.x_true) derived["system_mismatch"] = system_mismatch(*p.x_true, r.x);
  run.commit(derived);
  std::cout << derived.dump(2) << '\n';
  return kOk;
}

int cmd_solve_pd(Run& run, bool derive_only) {
  const json& c = run.config;
  const auto p = load_problem(c);
  const LinearMap L = present(c, "L") ? LinearMap::dense(csv::load_matrix(str(c, "L")))
                                      : difference_operator(p.A.cols());
  const auto constants = fidelity_constants(p.A, L);
  auto fidelity = std::make_shared<QuadraticFidelity>(p.A, p.y);
  const Denoiser T = make_cli_denoiser(c, L.output_dim());

  double sigma = 0.0, tau = 0.0;
  if (present(c, "sigma")) {
    sigma = num(c, "sigma");
  } else {
    sigma = derive_pd_params(constants.rho, constants.kappa_fhat, constants.l_norm_sq, T.beta(), num(c, "delta"),
                             num(c, "gamma"))
                .sigma;
  }
  tau = present(c, "tau") ? num(c, "tau") : num(c, "gamma") / (sigma * constants.l_norm_sq + 0.5 * constants.kappa_fhat);
  if (derive_only) {
    std::cout << json{{"sigma", sigma}, {"tau", tau}}.dump(2) << '\n';
    return kOk;
  }

  PdConfig cfg(sigma, tau, L, constants.rho, constants.kappa_fhat, T, fidelity);
  cfg.max_iter = static_cast<int>(integer(c, "max_iter"));
  cfg.stop_tol = num(c, "stop_tol");
  cfg.validate();
  const double weight = sigma + constants.rho / cfg.l_norm_sq();
  if (const auto& phi = T.induced_penalty()) {
    const Penalty pen = *phi;
    cfg.objective = [fidelity, pen, L, weight](const Vector& x) {
      return implicit_objective(x, *fidelity, L, pen, weight);
    };
  }
  const auto r = run_pd_molgrad(cfg, Vector::Zero(p.A.cols()), Vector::Zero(L.output_dim()));

  std::ostringstream trace;
  r.trace.write_csv(trace);
  run.stage("trace", ".csv", trace.str());
  run.stage("x", ".csv", vector_csv(r.x));
  run.stage_plot("set xlabel 'iteration'\n" + plot_curves({{run.file_name("trace", ".csv"), "residual"}}, "residual"));
  json derived = {{"beta", T.beta()},
                  {"rho", constants.rho},
                  {"kappa", constants.kappa},
                  {"kappa_fhat", constants.kappa_fhat},
                  {"l_norm_sq", cfg.l_norm_sq()},
                  {"sigma", sigma},
                  {"tau", tau},
                  {"penalty_weight", weight},
                  {"iterations", r.trace.iterations},
                  {"stop", to_string(r.trace.stop)},
                  {"final_residual", r.trace.residual.empty() ? 0.0 : r.trace.residual.back()},
                  {"noise_std", p.noise_std}};
  if (p.x_true) derived["system_mismatch"] = system_mismatch(*p.x_true, r.x);
  run.commit(derived);
  std::cout << derived.dump(2) << '\n';
  return kOk;
}

void stage_discrepancy_curves(Run& run, const DiscrepancyCurves& d) {
  const auto joint = run.stage("joint", ".csv", curve_csv("iter", "discrepancy", d.joint));
  const auto x = run.stage("x", ".csv", curve_csv("iter", "discrepancy", d.x));
  const auto u = run.stage("u", ".csv", curve_csv("iter", "discrepancy", d.u));
  run.stage_plot("set xlabel 'iteration'\n" + plot_curves({{joint, "x,u"}, {x, "x"}, {u, "u"}}, "discrepancy"));
}

double tail_min(const std::vector<double>& d) {
  const std::size_t start = d.size() - d.size() / 10;
  double m = d.empty() ? 0.0 : d.back();
  for (std::size_t k = start; k < d.size(); ++k) m = std::min(m, d[k]);
  return m;
}

int cmd_verify_theorem3(Run& run) {
  const json& c = run.config;
  const auto inst = make_problem(c);
  AgreementConfig cfg;
  cfg.lambda1 = num(c, "lambda1");
  cfg.lambda2 = num(c, "lambda2");
  cfg.delta = num(c, "delta");
  cfg.gamma = num(c, "gamma");
  cfg.baseline_sigma = num(c, "baseline_sigma");
  cfg.iters = static_cast<int>(integer(c, "iters"));
  const auto r = run_agreement_experiment(inst, cfg);
  stage_discrepancy_curves(run, r.curves);

  const double tol = num(c, "tolerance");
  const bool trend = eventually_non_increasing(r.curves.joint);
  const bool pass = r.curves.joint.back() <= tol && trend;
  const json summary = {{"final_joint_discrepancy", r.curves.joint.back()},
                        {"final_x_discrepancy", r.curves.x.back()},
                        {"final_u_discrepancy", r.curves.u.back()},
                        {"decreasing_trend", trend},
                        {"sigma", r.sigma},
                        {"tau", r.tau},
                        {"baseline_tau", r.baseline_tau},
                        {"penalty_weight", r.weight},
                        {"rho", r.constants.rho},
                        {"kappa", r.constants.kappa},
                        {"kappa_fhat", r.constants.kappa_fhat},
                        {"noise_std", inst.noise_std},
                        {"verdict", pass ? "pass" : "fail"}};
  run.stage("summary", ".json", summary.dump(2) + "\n");
  run.commit(summary);
  std::cout << summary.dump(2) << '\n';
  return pass ? kOk : kFailed;
}

int cmd_disagree(Run& run) {
  const json& c = run.config;
  const auto inst = make_problem(c);
  DisagreementConfig cfg;
  cfg.lambda1 = num(c, "lambda1");
  cfg.lambda2 = num(c, "lambda2");
  cfg.mu = present(c, "mu") ? num(c, "mu") : 0.0;
  cfg.sigma = num(c, "sigma");
  cfg.baseline_sigma = num(c, "baseline_sigma");
  cfg.gamma = num(c, "gamma");
  cfg.iters = static_cast<int>(integer(c, "iters"));
  const std::string mode = str(c, "tau_mode");
  if (mode == "recompute") {
    cfg.tau_mode = HeuristicTau::Recompute;
  } else if (mode == "keep") {
    cfg.tau_mode = HeuristicTau::KeepFromMolgrad;
  } else {
    throw UsageError("tau_mode must be 'recompute' or 'keep'");
  }
  const auto r = run_disagreement_experiment(inst, cfg);
  stage_discrepancy_curves(run, r.curves);

  const double plateau = tail_min(r.curves.joint);
  const double fx = r.curves.x.back();
  const bool pass = plateau >= 1e-4 && fx <= 1e-6 && r.curves.joint.back() >= 100.0 * fx;
  const json summary = {{"final_joint_discrepancy", r.curves.joint.back()},
                        {"final_x_discrepancy", fx},
                        {"final_u_discrepancy", r.curves.u.back()},
                        {"joint_plateau", plateau},
                        {"mu", r.mu},
                        {"tau", r.tau},
                        {"baseline_tau", r.baseline_tau},
                        {"lambda1_effective", r.lambda1_effective},
                        {"noise_std", inst.noise_std},
                        {"verdict", pass ? "pass" : "fail"}};
  run.stage("summary", ".json", summary.dump(2) + "\n");
  run.commit(summary);
  std::cout << summary.dump(2) << '\n';
  return pass ? kOk : kFailed;
}

int cmd_sweep(Run& run) {
  const json& c = run.config;
  SweepConfig cfg;
  cfg.n = integer(c, "n");
  cfg.m = integer(c, "m");
  const std::string mode = str(c, "noise_mode");
  if (mode != "relative" && mode != "absolute") throw UsageError("noise_mode must be 'relative' or 'absolute'");
  cfg.noise = {mode == "relative", num(c, "noise")};
  cfg.signal = {static_cast<int>(integer(c, "pieces")), num(c, "level_lo"), num(c, "level_hi")};
  cfg.n_trials = static_cast<int>(integer(c, "trials"));
  cfg.seed = seed_of(c);
  cfg.firm_lambda2_grid = grid(c, "firm_grid");
  cfg.l1_mu_grid = grid(c, "l1_grid");
  cfg.iters = static_cast<int>(integer(c, "iters"));
  cfg.gamma = num(c, "gamma");
  const long long threads = integer(c, "threads");
  if (threads < 0) throw UsageError("'threads' must be >= 0");
  cfg.threads = static_cast<unsigned>(threads);
  const auto out = run_sweep(cfg);

  const auto firm = run.stage("firm", ".csv", param_curve_csv("lambda2", "mean_mismatch", out.firm.grid, out.firm.mean));
  const auto l1 = run.stage("l1", ".csv", param_curve_csv("mu", "mean_mismatch", out.l1.grid, out.l1.mean));
  run.stage_plot("set xlabel 'lambda2 (firm) / mu (l1)'\n" +
                 plot_curves({{firm, "firm"}, {l1, "l1"}}, "mean system mismatch", true));
  json summary = {{"complete", out.complete}, {"trials_completed", out.firm.trials}};
  if (out.firm.trials > 0) {
    summary["best_firm"] = out.firm.best_mean();
    summary["best_firm_lambda2"] = out.firm.grid[out.firm.best_index()];
    summary["best_l1"] = out.l1.best_mean();
    summary["best_l1_mu"] = out.l1.grid[out.l1.best_index()];
  }
  if (!out.complete) summary["error"] = out.error;
  const bool pass = out.complete && out.firm.best_mean() <= out.l1.best_mean();
  summary["verdict"] = pass ? "pass" : "fail";
  run.stage("summary", ".json", summary.dump(2) + "\n");
  run.commit(summary, out.complete ? "ok" : "partial");
  std::cout << summary.dump(2) << '\n';
  if (!out.complete) std::cerr << "molgrad: sweep incomplete: " << out.error << '\n';
  return pass ? kOk : kFailed;
}

int cmd_gen_signal(Run& run) {
  const json& c = run.config;
  const Vector x = generate_piecewise_signal(integer(c, "n"), static_cast<int>(integer(c, "pieces")),
                                             num(c, "level_lo"), num(c, "level_hi"), seed_of(c));
  const auto name = run.stage("x", ".csv", vector_csv(x));
  run.stage_plot("set xlabel 'index'\nplot '" + name + "' using 0:1 with steps title 'x'\n");
  run.commit(json::object());
  std::cout << (run.dir / name).string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// Resolution: defaults, then the paper-scale preset, then the config file,
// then flags.

json load_config_file(const std::string& path, const std::string& command) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must be a JSON object");
  if (j.contains("command") && j.contains("config")) {
    if (j["command"] != command)
      throw UsageError("config " + path + " is a manifest for '" + j["command"].get<std::string>() + "'");
    j = j["config"];
    if (!j.is_object()) throw UsageError("config " + path + ": 'config' must be an object");
  }
  return j;
}

json resolve(const Command& cmd, const json& file_cfg, const json& flag_cfg) {
  const json given = merged(file_cfg, flag_cfg);
  json r = cmd.defaults;
  r["seed"] = 1;
  r["paper_scale"] = false;
  r["gnuplot"] = false;
  const bool paper = given.contains("paper_scale") && given["paper_scale"].is_boolean() && given["paper_scale"].get<bool>();
  if (paper && cmd.paper_preset.is_object()) r.update(cmd.paper_preset);
  for (const auto& [key, value] : given.items()) {
    if (!r.contains(key)) throw UsageError("unknown setting '" + key + "' for " + cmd.name);
    r[key] = value;
  }
  seed_of(r);
  boolean(r, "paper_scale");
  boolean(r, "gnuplot");
  return r;
}

void print_error(const std::string& what) { std::cerr << "molgrad: error: " << what << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoL-Grad denoisers, splitting solvers and experiments", "molgrad"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_flag;
  std::uint64_t seed_flag = 1;
  bool paper_flag = false, gnuplot = false, derive_params = false;
  app.add_option("--config", config_path, "JSON config or emitted manifest");
  CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "global seed (default 1)");
  CLI::Option* out_opt = app.add_option("--out", out_flag, "output directory (default: MOLGRAD_OUT or .)");
  app.add_flag("--paper-scale", paper_flag, "full-size preset: n = 256, m = 1024");
  app.add_flag("--gnuplot", gnuplot, "also write a gnuplot script");

  std::vector<Command> cmds;
  auto add_command = [&](const std::string& name, const std::string& help, json defaults, json preset,
                         std::function<int(Run&)> body) -> Command& {
    Command c;
    c.name = name;
    c.app = app.add_subcommand(name, help);
    c.flags = std::make_unique<FlagSet>(c.app);
    c.defaults = std::move(defaults);
    c.paper_preset = std::move(preset);
    c.body = std::move(body);
    cmds.push_back(std::move(c));
    return cmds.back();
  };

  const json experiment_preset = {{"n", 256}, {"m", 1024}};
  cmds.reserve(7);

  {
    json d = merged(denoiser_defaults(""), {{"dim", nullptr},
                                            {"pairs", 10000},
                                            {"jacobian_probes", 100},
                                            {"box_lo", -20.0},
                                            {"box_hi", 20.0},
                                            {"fd_step", 1e-6},
                                            {"jacobian_tol", 1e-6}});
    d["denoiser"] = nullptr;
    auto& c = add_command("certify", "sample-based certification of a denoiser", d, nullptr, cmd_certify);
    c.flags->add<std::string>("denoiser", "denoiser", "soft, firm, garrote, vector-firm, group-firm or tied-relu");
    add_denoiser_param_flags(*c.flags);
    c.flags->add<long long>("--dim", "dim", "sampling dimension");
    c.flags->add<long long>("--pairs", "pairs", "sampled pairs per check");
    c.flags->add<long long>("--jacobian-probes", "jacobian_probes", "points for the Jacobian symmetry check");
    c.flags->add<double>("--box-lo", "box_lo", "lower corner of the sampling box");
    c.flags->add<double>("--box-hi", "box_hi", "upper corner of the sampling box");
    c.flags->add<double>("--fd-step", "fd_step", "finite-difference step");
    c.flags->add<double>("--jacobian-tol", "jacobian_tol", "largest accepted Jacobian asymmetry");
  }
  {
    json d = merged(merged(problem_defaults(), denoiser_defaults("firm")),
                    {{"A", nullptr}, {"y", nullptr}, {"mu", nullptr}, {"max_iter", 10000}, {"stop_tol", 1e-10}});
    d["lambda1"] = 1.0;
    d["lambda2"] = 10.0;
    auto& c = add_command("solve-fbs", "forward-backward splitting with a denoiser", d, nullptr, cmd_solve_fbs);
    add_problem_flags(*c.flags);
    c.flags->add<std::string>("--denoiser", "denoiser", "denoiser name");
    add_denoiser_param_flags(*c.flags);
    c.flags->add<std::string>("--A", "A", "sensing matrix CSV (instead of a generated problem)");
    c.flags->add<std::string>("--y", "y", "measurement CSV");
    c.flags->add<double>("--mu", "mu", "step size (default: middle of the admissible window)");
    c.flags->add<long long>("--max-iter", "max_iter", "iteration cap");
    c.flags->add<double>("--stop-tol", "stop_tol", "relative fixed-point residual for early exit");
  }
  {
    json d = merged(merged(problem_defaults(), denoiser_defaults("firm")),
                    {{"A", nullptr},
                     {"y", nullptr},
                     {"L", nullptr},
                     {"sigma", nullptr},
                     {"tau", nullptr},
                     {"delta", 1.0},
                     {"gamma", 0.9},
                     {"max_iter", 10000},
                     {"stop_tol", 1e-10}});
    d["lambda1"] = 2.5;
    d["lambda2"] = 5.0;
    auto& c = add_command("solve-pd", "modified primal-dual splitting with a denoiser on the dual side", d, nullptr,
                          [&derive_params](Run& r) { return cmd_solve_pd(r, derive_params); });
    add_problem_flags(*c.flags);
    c.flags->add<std::string>("--denoiser", "denoiser", "denoiser name");
    add_denoiser_param_flags(*c.flags);
    c.flags->add<std::string>("--A", "A", "sensing matrix CSV (instead of a generated problem)");
    c.flags->add<std::string>("--y", "y", "measurement CSV");
    c.flags->add<std::string>("--L", "L", "analysis operator CSV (default: first differences)");
    c.flags->add<double>("--sigma", "sigma", "dual step (default: derived from delta)");
    c.flags->add<double>("--tau", "tau", "primal step (default: derived from gamma)");
    c.flags->add<double>("--delta", "delta", "sigma as a fraction of its bound");
    c.flags->add<double>("--gamma", "gamma", "tau as a fraction of its bound");
    c.flags->add<long long>("--max-iter", "max_iter", "iteration cap");
    c.flags->add<double>("--stop-tol", "stop_tol", "relative fixed-point residual for early exit");
    c.app->add_flag("--derive-params", derive_params, "print sigma and tau, then exit");
  }
  {
    json d = merged(problem_defaults(), {{"lambda1", 2.5},
                                         {"lambda2", 5.0},
                                         {"delta", 1.0},
                                         {"gamma", 0.9},
                                         {"baseline_sigma", 0.2},
                                         {"iters", 10000},
                                         {"tolerance", 1e-6}});
    auto& c = add_command("verify-theorem3", "agreement of the primal-dual firm scheme with its convex rewrite", d,
                          experiment_preset, cmd_verify_theorem3);
    add_problem_flags(*c.flags);
    c.flags->add<double>("--lambda1", "lambda1", "firm threshold");
    c.flags->add<double>("--lambda2", "lambda2", "firm knee");
    c.flags->add<double>("--delta", "delta", "sigma as a fraction of its bound");
    c.flags->add<double>("--gamma", "gamma", "tau as a fraction of its bound");
    c.flags->add<double>("--baseline-sigma", "baseline_sigma", "dual step of the reference run");
    c.flags->add<long long>("--iters", "iters", "iterations");
    c.flags->add<double>("--tolerance", "tolerance", "largest accepted final joint discrepancy");
  }
  {
    json d = merged(problem_defaults(), {{"lambda1", 2.5},
                                         {"lambda2", 5.0},
                                         {"mu", nullptr},
                                         {"sigma", 0.2},
                                         {"baseline_sigma", 0.2},
                                         {"gamma", 0.9},
                                         {"tau_mode", "recompute"},
                                         {"iters", 10000}});
    auto& c = add_command("disagree", "heuristic firm plug-in against the same reference run", d, experiment_preset,
                          cmd_disagree);
    add_problem_flags(*c.flags);
    c.flags->add<double>("--lambda1", "lambda1", "firm threshold of the matching primal-dual run");
    c.flags->add<double>("--lambda2", "lambda2", "firm knee");
    c.flags->add<double>("--mu", "mu", "fidelity weight (default: ||D||^2/(rho lambda2))");
    c.flags->add<double>("--sigma", "sigma", "dual step of the heuristic run");
    c.flags->add<double>("--baseline-sigma", "baseline_sigma", "dual step of the reference run");
    c.flags->add<double>("--gamma", "gamma", "tau as a fraction of its bound");
    c.flags->add<std::string>("--tau-mode", "tau_mode", "recompute or keep");
    c.flags->add<long long>("--iters", "iters", "iterations");
  }
  {
    json d = merged(problem_defaults(), {{"trials", 30},
                                         {"iters", 5000},
                                         {"gamma", 0.9},
                                         {"firm_grid", default_firm_lambda2_grid()},
                                         {"l1_grid", default_l1_mu_grid()},
                                         {"threads", 0}});
    auto& c = add_command("sweep", "firm versus l1 system mismatch over parameter grids", d,
                          merged(experiment_preset, {{"trials", 300}}), cmd_sweep);
    add_problem_flags(*c.flags);
    c.flags->add<long long>("--trials", "trials", "number of trials");
    c.flags->add<long long>("--iters", "iters", "iterations per run");
    c.flags->add<double>("--gamma", "gamma", "tau as a fraction of its bound");
    c.flags->add<std::vector<double>>("--firm-grid", "firm_grid", "comma-separated lambda2 values");
    c.flags->add<std::vector<double>>("--l1-grid", "l1_grid", "comma-separated mu values");
    c.flags->add<long long>("--threads", "threads", "worker threads (0: all cores)");
  }
  {
    json d = {{"n", 256}, {"pieces", 8}, {"level_lo", -2.0}, {"level_hi", 2.0}};
    auto& c = add_command("gen-signal", "piecewise-constant test signal", d, nullptr, cmd_gen_signal);
    c.flags->add<long long>("--n", "n", "signal length");
    c.flags->add<long long>("--pieces", "pieces", "number of constant pieces");
    c.flags->add<double>("--level-lo", "level_lo", "lowest level");
    c.flags->add<double>("--level-hi", "level_hi", "highest level");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  Command* cmd = nullptr;
  for (auto& c : cmds)
    if (c.app->parsed()) cmd = &c;
  if (!cmd) return kUsage;

  try {
    json file_cfg = config_path.empty() ? json::object() : load_config_file(config_path, cmd->name);
    Run run;
    run.command = cmd->name;
    run.dir = ".";
    if (file_cfg.contains("output_dir")) {
      run.dir = str(file_cfg, "output_dir");
      file_cfg.erase("output_dir");
    }
    if (const char* env = std::getenv("MOLGRAD_OUT"); env && *env) run.dir = env;
    if (out_opt->count()) run.dir = out_flag;

    json flag_cfg = cmd->flags->collect();
    if (seed_opt->count()) flag_cfg["seed"] = seed_flag;
    if (paper_flag) flag_cfg["paper_scale"] = true;
    if (gnuplot) flag_cfg["gnuplot"] = true;
    run.config = resolve(*cmd, file_cfg, flag_cfg);
    run.gnuplot = run.config["gnuplot"].get<bool>();
    return cmd->body(run);
  } catch (const ConfigError& e) {
    print_error(e.what());
    return kWindow;
  } catch (const DivergenceError& e) {
    print_error(e.what());
    return kDiverged;
  } catch (const UsageError& e) {
    print_error(e.what());
    return kUsage;
  } catch (const InputError& e) {
    print_error(e.what());
    return kUsage;
  } catch (const ParameterError& e) {
    print_error(e.what());
    return kUsage;
  } catch (const PreconditionError& e) {
    print_error(e.what());
    return kUsage;
  } catch (const json::exception& e) {
    print_error(e.what());
    return kUsage;
  } catch (const std::exception& e) {
    print_error(e.what());
    return kFailed;
  }
}
