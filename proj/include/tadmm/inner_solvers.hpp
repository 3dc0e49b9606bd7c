#pragma once

// Single-node iterative sub-solvers: forward-backward splitting, L-BFGS and
// dual coordinate descent for the proximally regularized linear SVM.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/prox.hpp"

namespace tadmm {

/// A smooth convex function: returns f(x) and writes grad f(x).
template <class F>
concept SmoothFunction = requires(const F& f, std::span<const double> x, std::span<double> g) {
  { f(x, g) } -> std::convertible_to<double>;
};

/// Anything with prox(z, step) and value(z), such as SeparableProx.
template <class P>
concept ProxTerm = requires(const P& p, std::span<const double> z, double step) {
  { p.prox(z, step) } -> std::convertible_to<Vector>;
  { p.value(z) } -> std::convertible_to<double>;
};

using SmoothOracle = std::function<double(std::span<const double>, std::span<double>)>;

/// The quadratic 1/2 x^T G x - x^T c (+ constant).
inline SmoothOracle quadratic_oracle(const DenseMatrix& gram, Vector linear, double constant = 0.0) {
  return [&gram, c = std::move(linear), constant](std::span<const double> x, std::span<double> g) {
    matvec_into(gram, x, false, g);
    const double quad = 0.5 * dot(x, g);
    const double lin = dot(x, c);
    axpy(-1.0, c, g);
    return quad - lin + constant;
  };
}

struct InnerResult {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

/// Estimates the gradient Lipschitz constant by power iteration on
/// Hessian-vector products formed from gradient differences. Exact for
/// quadratics up to the iteration count.
template <SmoothFunction F>
double estimate_lipschitz(const F& smooth, std::span<const double> x0, std::size_t iters = 10) {
  const std::size_t n = x0.size();
  if (n == 0) return 1.0;
  Vector base(x0.begin(), x0.end());
  Vector g0(n), g1(n), probe(n);
  smooth(base, g0);
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.37 * static_cast<double>(i % 5);
  double est = 0.0;
  const double h = 1e-4 * std::max(1.0, norm2(base));
  for (std::size_t it = 0; it < iters; ++it) {
    const double nv = norm2(v);
    if (nv == 0.0) break;
    for (double& a : v) a /= nv;
    for (std::size_t i = 0; i < n; ++i) probe[i] = base[i] + h * v[i];
    smooth(probe, g1);
    for (std::size_t i = 0; i < n; ++i) v[i] = (g1[i] - g0[i]) / h;
    est = norm2(v);
  }
  return est > 0.0 ? est : 1.0;
}

struct FbsOptions {
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  /// Fixed step (no backtracking) when positive; otherwise backtracking
  /// by halving from 1/L with L estimated from the smooth term.
  double fixed_step = 0.0;
  /// Known Lipschitz constant of the smooth gradient; estimated if zero.
  double lipschitz = 0.0;
  /// Called after every iteration with (iteration, objective).
  std::function<void(std::size_t, double)> on_iteration;
};

/// Forward-backward splitting: x <- prox_g(x - t grad f(x), t).
/// Stops when the relative change or the prox-gradient residual falls below tol.
template <SmoothFunction F, ProxTerm P>
InnerResult fbs_solve(const F& smooth, const P& prox, std::span<const double> x0,
                      const FbsOptions& opt = {}) {
  detail::require(opt.tol > 0.0, "fbs_solve: tol must be positive");
  const std::size_t n = x0.size();
  Vector x(x0.begin(), x0.end());
  Vector grad(n), grad_new(n), trial(n);
  double f = smooth(x, grad);
  double objective = f + prox.value(x);

  double step = opt.fixed_step;
  const bool backtrack = !(step > 0.0);
  if (backtrack) {
    const double lip = opt.lipschitz > 0.0 ? opt.lipschitz : estimate_lipschitz(smooth, x);
    step = 1.0 / lip;
  }

  InnerResult res;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    Vector x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - step * grad[i];
      x_new = prox.prox(trial, step);
      f_new = smooth(x_new, grad_new);
      if (!backtrack) break;
      const Vector d = subtract(x_new, x);
      const double model = f + dot(grad, d) + norm_sq(d) / (2.0 * step);
      if (f_new <= model + 1e-12 * std::abs(f)) break;
      step *= 0.5;
    }
    const double change = std::sqrt(dist_sq(x_new, x));
    const double scale = std::max(1.0, norm2(x_new));
    x = std::move(x_new);
    grad.swap(grad_new);
    f = f_new;
    objective = f + prox.value(x);
    res.iterations = it + 1;
    if (opt.on_iteration) opt.on_iteration(res.iterations, objective);
    if (change <= opt.tol * scale || change / step <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.objective = objective;
  return res;
}

struct LbfgsOptions {
  std::size_t memory = 10;
  double tol = 1e-8;  // on the infinity norm of the gradient
  std::size_t max_iter = 200;
};

struct LbfgsResult : InnerResult {
  std::size_t line_search_failures = 0;
};

/// Limited-memory BFGS with Armijo backtracking. A failed line search falls
/// back to a steepest-descent step and still counts as an iteration.
template <SmoothFunction F>
LbfgsResult lbfgs_solve(const F& smooth, std::span<const double> x0, const LbfgsOptions& opt = {}) {
  detail::require(opt.memory >= 1, "lbfgs_solve: memory must be >= 1");
  detail::require(opt.tol > 0.0, "lbfgs_solve: tol must be positive");
  const std::size_t n = x0.size();
  Vector x(x0.begin(), x0.end());
  Vector g(n), g_new(n), x_new(n), d(n);
  double f = smooth(x, g);

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  LbfgsResult res;

  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    if (norm_inf(g) <= opt.tol) {
      res.converged = true;
      break;
    }
    // two-loop recursion
    d = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t j = s_hist.size(); j-- > 0;) {
      alpha[j] = rho_hist[j] * dot(s_hist[j], d);
      axpy(-alpha[j], y_hist[j], d);
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / norm_sq(y_hist.back());
      for (double& v : d) v *= gamma;
    } else {
      const double gn = norm_inf(g);
      for (double& v : d) v /= std::max(1.0, gn);
    }
    for (std::size_t j = 0; j < s_hist.size(); ++j) {
      const double beta = rho_hist[j] * dot(y_hist[j], d);
      axpy(alpha[j] - beta, s_hist[j], d);
    }
    for (double& v : d) v = -v;
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      d = scaled(g, -1.0 / std::max(1.0, norm_inf(g)));
      slope = dot(g, d);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      f_new = smooth(x_new, g_new);
      if (!std::isfinite(f_new)) {
        step *= 0.5;
        continue;
      }
      // Armijo, or the approximate Wolfe test once f stalls at round-off level.
      const double slope_new = dot(g_new, d);
      if (f_new <= f + 1e-4 * step * slope ||
          (f_new <= f + 1e-12 * std::abs(f) && slope_new >= 0.9 * slope &&
           slope_new <= -0.8 * slope)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      ++res.line_search_failures;
      const double gn = norm2(g);
      const double sd = 1e-3 / std::max(1.0, gn);
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] - sd * g[i];
      f_new = smooth(x_new, g_new);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    } else {
      Vector s = subtract(x_new, x);
      Vector y = subtract(g_new, g);
      const double sy = dot(s, y);
      if (sy > 1e-12 * norm2(s) * norm2(y)) {
        s_hist.push_back(std::move(s));
        y_hist.push_back(std::move(y));
        rho_hist.push_back(1.0 / sy);
        if (s_hist.size() > opt.memory) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    res.iterations = it + 1;
  }
  if (!res.converged && norm_inf(g) <= opt.tol) res.converged = true;
  res.x = std::move(x);
  res.objective = f;
  return res;
}

// ---------------------------------------------------------------------------
// Dual coordinate descent for
//   min_w 1/2 ||w||^2 + C sum_k max(1 - l_k A_k w, 0) + tau/2 ||w - z||^2
// through its dual
//   min_{alpha in [0,C]^M} 1/2 ||A^T L alpha||^2 - alpha^T ((1+tau) 1 - tau L A z)
// and the recovery w = (A^T L alpha + tau z) / (1 + tau).

struct DualSvmState {
  Vector alpha;
  Vector w_cache;  // A^T L alpha
};

struct SvmOptions {
  double tol = 1e-8;  // on the largest projected gradient
  std::size_t max_passes = 200;
};

struct SvmResult {
  Vector w;
  DualSvmState state;
  std::size_t passes = 0;
  bool converged = false;
  double dual_objective = 0.0;
};

inline Vector svm_dual_linear_term(const DenseMatrix& a, std::span<const double> labels,
                                   double tau, std::span<const double> z) {
  const Vector az = matvec(a, z);
  Vector p(a.rows());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = (1.0 + tau) - tau * labels[k] * az[k];
  return p;
}

inline double svm_dual_objective(const DenseMatrix& a, std::span<const double> labels, double tau,
                                 std::span<const double> z, std::span<const double> alpha) {
  Vector la(alpha.size());
  for (std::size_t k = 0; k < la.size(); ++k) la[k] = labels[k] * alpha[k];
  const Vector w = matvec(a, la, true);
  return 0.5 * norm_sq(w) - dot(alpha, svm_dual_linear_term(a, labels, tau, z));
}

inline SvmResult svm_dual_cd(const DenseMatrix& a, std::span<const double> labels, double c,
                             double tau, std::span<const double> z,
                             const DualSvmState* warm = nullptr, const SvmOptions& opt = {}) {
  detail::require(c > 0.0, "svm_dual_cd: C must be positive");
  detail::require(tau > 0.0, "svm_dual_cd: tau must be positive");
  detail::require_dims(labels.size() == a.rows(), "svm_dual_cd: label count mismatch");
  detail::require_dims(z.size() == a.cols(), "svm_dual_cd: z length mismatch");
  detail::check_labels(labels);
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();

  SvmResult res;
  DualSvmState& st = res.state;
  if (warm && warm->alpha.size() == m) {
    st.alpha = warm->alpha;
    for (double& v : st.alpha) v = std::clamp(v, 0.0, c);
  } else {
    st.alpha.assign(m, 0.0);
  }
  {
    Vector la(m);
    for (std::size_t k = 0; k < m; ++k) la[k] = labels[k] * st.alpha[k];
    st.w_cache = matvec(a, la, true);
  }

  const Vector p = svm_dual_linear_term(a, labels, tau, z);
  Vector diag(m);
  for (std::size_t k = 0; k < m; ++k) diag[k] = norm_sq(a.row(k));

  auto gradient = [&](std::size_t k) { return labels[k] * dot(a.row(k), st.w_cache) - p[k]; };
  auto projected = [&](std::size_t k, double g) {
    if (st.alpha[k] <= 0.0) return std::min(g, 0.0);
    if (st.alpha[k] >= c) return std::max(g, 0.0);
    return g;
  };

  std::vector<std::size_t> order(m);
  Vector pg(m);
  for (std::size_t pass = 0; pass < opt.max_passes; ++pass) {
    double worst = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      pg[k] = projected(k, gradient(k));
      worst = std::max(worst, std::abs(pg[k]));
    }
    if (worst <= opt.tol) {
      res.converged = true;
      break;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return std::abs(pg[i]) > std::abs(pg[j]); });
    for (std::size_t k : order) {
      const double g = gradient(k);
      if (projected(k, g) == 0.0) continue;
      double next;
      if (diag[k] > 0.0)
        next = std::clamp(st.alpha[k] - g / diag[k], 0.0, c);
      else
        next = g < 0.0 ? c : 0.0;
      const double delta = next - st.alpha[k];
      if (delta == 0.0) continue;
      st.alpha[k] = next;
      axpy(delta * labels[k], a.row(k), st.w_cache);
    }
    res.passes = pass + 1;
  }
  if (!res.converged) {
    double worst = 0.0;
    for (std::size_t k = 0; k < m; ++k) worst = std::max(worst, std::abs(projected(k, gradient(k))));
    res.converged = worst <= opt.tol;
  }

  res.w.resize(n);
  for (std::size_t j = 0; j < n; ++j) res.w[j] = (st.w_cache[j] + tau * z[j]) / (1.0 + tau);
  res.dual_objective = 0.5 * norm_sq(st.w_cache) - dot(st.alpha, p);
  return res;
}

}  // namespace tadmm
