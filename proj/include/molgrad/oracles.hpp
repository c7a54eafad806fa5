#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "molgrad/regularizers.hpp"

namespace molgrad {

// Brute-force ground truth for s-prox operators and convex conjugates. These
// routines only evaluate penalties pointwise; they share no code path with
// the closed-form operators they are used to check.

/// Golden-section minimization of a unimodal function on [a, b]. Stops when
/// the bracket is shorter than `tol`.
template <class F>
double golden_section_min(F&& f, double a, double b, double tol) {
  constexpr double inv_phi = 0.6180339887498948482;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
    // Guard against stalls once the bracket reaches floating-point resolution.
    if (!(c > a) && !(d < b)) break;
  }
  return fc <= fd ? c : d;
}

/// Search specification for the one-dimensional oracles. When `lo`/`hi` are
/// absent the default interval [−|x| − 10γ, |x| + 10γ] is used, which contains
/// [x − 10γ, x + 10γ] and every catalog prox value.
struct Search1d {
  std::optional<double> lo;
  std::optional<double> hi;
  int coarse_steps = 4001;
  double refine_tol = 1e-8;  ///< relative to the bracketing cell width
};

namespace detail {

/// Coarse scan over a uniform grid followed by golden-section refinement on
/// the cells around the discrete minimizer. Grid points with value +∞ are
/// skipped by the scan.
template <class F>
double grid_then_golden(F&& objective, double lo, double hi, int steps, double refine_tol) {
  if (!(hi > lo)) throw InputError("grid search: empty interval");
  if (steps < 3) throw InputError("grid search: need at least 3 coarse points");
  const double h = (hi - lo) / static_cast<double>(steps - 1);
  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < steps; ++i) {
    const double v = objective(lo + h * i);
    if (std::isfinite(v) && v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best < 0) throw PreconditionError("grid search: objective is +inf on the whole grid");
  const double a = lo + h * std::max(best - 1, 0);
  const double b = lo + h * std::min(best + 1, steps - 1);
  const double y = golden_section_min(objective, a, b, refine_tol * (b - a));
  return objective(y) <= best_val ? y : lo + h * best;
}

}  // namespace detail

/// argmin_y γφ(y) + ½(x − y)² by exhaustive scan plus golden refinement.
/// Requires γ·weak_convexity < 1 so the objective is strongly convex.
inline double sprox_oracle_1d(const Penalty& penalty, double x, double gamma, const Search1d& search = {}) {
  require_positive(gamma, "oracle gamma");
  if (!(gamma * penalty.weak_convexity() < 1.0))
    throw PreconditionError("sprox oracle: gamma * weak_convexity must be < 1 for a unique minimizer");
  const double r = std::abs(x) + 10.0 * gamma;
  const double lo = search.lo.value_or(-r);
  const double hi = search.hi.value_or(r);
  auto objective = [&](double y) {
    const double p = penalty(y);
    if (std::isinf(p)) return p;
    return gamma * p + 0.5 * (x - y) * (x - y);
  };
  return detail::grid_then_golden(objective, lo, hi, search.coarse_steps, search.refine_tol);
}

struct GridNd {
  int points_per_dim = 400;
  std::optional<double> half_width;  ///< default ‖x‖∞ + 10γ, centred at 0
  double refine_tol = 1e-10;
};

/// Brute-force s-prox in one or two dimensions: a uniform grid, then nested
/// golden-section refinement over the neighbouring cells.
inline Vector sprox_oracle_nd(const Penalty& penalty, const Vector& x, double gamma, const GridNd& grid = {}) {
  require_positive(gamma, "oracle gamma");
  if (x.size() < 1) throw InputError("sprox oracle: empty vector");
  if (x.size() > 2) throw UnsupportedError("sprox oracle: grid search supports at most 2 dimensions");
  if (!(gamma * penalty.weak_convexity() < 1.0))
    throw PreconditionError("sprox oracle: gamma * weak_convexity must be < 1 for a unique minimizer");
  const double R = grid.half_width.value_or(x.cwiseAbs().maxCoeff() + 10.0 * gamma);
  if (x.size() == 1) {
    Search1d s{-R, R, grid.points_per_dim, grid.refine_tol};
    Vector out(1);
    out[0] = sprox_oracle_1d(penalty, x[0], gamma, s);
    return out;
  }

  auto objective = [&](double a, double b) {
    const double y[2] = {a, b};
    const double p = penalty(std::span<const double>(y, 2));
    if (std::isinf(p)) return p;
    return gamma * p + 0.5 * ((x[0] - a) * (x[0] - a) + (x[1] - b) * (x[1] - b));
  };

  const int N = grid.points_per_dim;
  if (N < 3) throw InputError("sprox oracle: need at least 3 grid points per dimension");
  const double h = 2.0 * R / (N - 1);
  int bi = -1, bj = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double v = objective(-R + h * i, -R + h * j);
      if (std::isfinite(v) && v < best) {
        best = v;
        bi = i;
        bj = j;
      }
    }
  if (bi < 0) throw PreconditionError("sprox oracle: objective is +inf on the whole grid");

  constexpr int span = 3;
  const double a0 = -R + h * std::max(bi - span, 0), b0 = -R + h * std::min(bi + span, N - 1);
  const double a1 = -R + h * std::max(bj - span, 0), b1 = -R + h * std::min(bj + span, N - 1);
  const double tol0 = grid.refine_tol * (b0 - a0);
  const double tol1 = grid.refine_tol * (b1 - a1);
  // The partial minimum over the second coordinate of a jointly convex
  // function is convex, so nested golden search is valid.
  auto inner_arg = [&](double a) { return golden_section_min([&](double b) { return objective(a, b); }, a1, b1, tol1); };
  auto partial = [&](double a) { return objective(a, inner_arg(a)); };
  const double ya = golden_section_min(partial, a0, b0, tol0);
  Vector out(2);
  out << ya, inner_arg(ya);
  if (!(objective(out[0], out[1]) <= best)) out << -R + h * bi, -R + h * bj;
  return out;
}

struct ConjugateSearch {
  double half_width = 0.0;  ///< 0 selects max(10, 10|u|)
  int coarse_steps = 2001;
  double refine_tol = 1e-10;
  int max_widen = 3;  ///< each retry quadruples the interval
};

struct ConjugateValue {
  double value = kInfinity;
  double argmax = 0.0;
  bool bounded = false;  ///< false: the sup kept escaping the search interval
};

/// f*(u) = sup_y u·y − f(y) for a convex scalar f, by grid scan and golden
/// refinement. If the maximizer sits on the interval boundary the interval is
/// widened; after `max_widen` retries the result is reported unbounded (+∞).
inline ConjugateValue convex_conjugate_1d(const Penalty& convex_fn, double u, const ConjugateSearch& search = {}) {
  double R = search.half_width > 0.0 ? search.half_width : std::max(10.0, 10.0 * std::abs(u));
  auto neg = [&](double y) {
    const double f = convex_fn(y);
    if (std::isinf(f)) return f;
    return f - u * y;
  };
  for (int attempt = 0; attempt <= search.max_widen; ++attempt, R *= 4.0) {
    const int N = search.coarse_steps;
    const double h = 2.0 * R / (N - 1);
    int best = -1;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
      const double v = neg(-R + h * i);
      if (std::isfinite(v) && v < best_val) {
        best_val = v;
        best = i;
      }
    }
    if (best < 0) throw PreconditionError("conjugate: function is +inf on the whole grid");
    if (best == 0 || best == N - 1) continue;
    const double a = -R + h * (best - 1);
    const double b = -R + h * (best + 1);
    double y = golden_section_min(neg, a, b, search.refine_tol * (b - a));
    if (!(neg(y) <= best_val)) y = -R + h * best;
    return {-neg(y), y, true};
  }
  return {kInfinity, 0.0, false};
}

/// Like convex_conjugate_1d but throws when the supremum is not bracketed.
inline double convex_conjugate_value(const Penalty& convex_fn, double u, const ConjugateSearch& search = {}) {
  auto c = convex_conjugate_1d(convex_fn, u, search);
  if (!c.bounded) throw PreconditionError("conjugate: supremum attained at the search boundary");
  return c.value;
}

}  // namespace molgrad
