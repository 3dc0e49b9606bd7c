#pragma once

// Lasso by one Gram reduction: every node sends D_i^T D_i, D_i^T b_i and
// ||b_i||^2 once, after which
//   min mu |x| + 1/2 x^T (D^T D) x - x^T D^T b + 1/2 ||b||^2
// is solved on the central node by forward-backward splitting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tadmm/cluster.hpp"
#include "tadmm/config.hpp"
#include "tadmm/error.hpp"
#include "tadmm/inner_solvers.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/problem.hpp"
#include "tadmm/prox.hpp"
#include "tadmm/record.hpp"

namespace tadmm {

/// mu |x| + 1/2 ||D x - b||^2.
inline double lasso_objective(const DenseMatrix& d, std::span<const double> b,
                              std::span<const double> x, double mu) {
  detail::require_dims(d.rows() == b.size() && d.cols() == x.size(),
                       "lasso_objective: dimension mismatch");
  const Vector dx = matvec(d, x);
  return mu * norm1(x) + 0.5 * dist_sq(dx, b);
}

/// The same value from the reduced statistics G = D^T D, c = D^T b and ||b||^2.
inline double lasso_objective(const DenseMatrix& gram, std::span<const double> atb,
                              double b_norm_sq, std::span<const double> x, double mu) {
  detail::require_dims(gram.rows() == x.size() && atb.size() == x.size(),
                       "lasso_objective: dimension mismatch");
  const Vector gx = matvec(gram, x);
  return mu * norm1(x) + 0.5 * dot(x, gx) - dot(x, atb) + 0.5 * b_norm_sq;
}

/// Largest violation of 0 in mu d|x| + G x - c over coordinates.
inline double lasso_kkt_violation(const DenseMatrix& gram, std::span<const double> atb,
                                  std::span<const double> x, double mu) {
  const Vector g = subtract(matvec(gram, x), atb);
  double worst = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    double v;
    if (x[j] > 0.0)
      v = std::abs(g[j] + mu);
    else if (x[j] < 0.0)
      v = std::abs(g[j] - mu);
    else
      v = std::max(std::abs(g[j]) - mu, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

struct TransposeLassoResult {
  Vector x;
  ConvergenceRecord record;
  GramContribution totals;
  double kkt_violation = 0.0;
};

namespace detail {

struct L1Term {
  double mu;
  Vector prox(std::span<const double> z, double step) const { return prox_l1(z, step, mu); }
  double value(std::span<const double> z) const { return mu * norm1(z); }
};

}  // namespace detail

inline TransposeLassoResult transpose_lasso(const ProblemSpec& problem, const SolverConfig& cfg,
                                            std::span<const double> x0 = {}) {
  validate(cfg);
  detail::require(problem.layout == Layout::rows, "transpose_lasso: needs a row-sharded problem");
  detail::require(problem.data_blocks == problem.blocks.size(),
                  "transpose_lasso: augmented problems are not supported");
  for (const auto& b : problem.blocks)
    detail::require(b.loss.kind() == ProxKind::quadratic,
                    "transpose_lasso: every block must carry a least-squares term");
  const double mu = problem.l1;
  detail::require(mu >= 0.0, "transpose_lasso: mu must be >= 0");

  const auto t0 = std::chrono::steady_clock::now();
  struct Slot {};
  Cluster<Block, Slot> cl(problem.blocks, std::vector<Slot>(problem.blocks.size()), cfg.lanes);
  const std::size_t n = cl.cols();
  auto parts = cl.all_execute([](std::size_t, const Block& b, Slot&) {
    const Vector targets = scaled(b.loss.data(), -1.0);
    return gram_accumulate(b.matrix, std::span<const double>(targets));
  });
  cl.count_upload(8u * (n * n + n + 1) * cl.size());

  TransposeLassoResult res;
  res.totals = gram_sum(std::span<const GramContribution>(parts));
  const DenseMatrix& gram = res.totals.gram;
  const Vector& atb = *res.totals.rhs;
  const double bsq = res.totals.rhs_norm_sq;

  auto& meta = res.record.meta;
  meta.solver = "transpose";
  meta.problem = to_string(problem.kind);
  meta.m = problem.data_rows();
  meta.n = n;
  meta.nodes = problem.nodes();
  meta.tau = kNotApplicable;
  meta.seed = cfg.seed;
  meta.spectral_radius = spectral_radius(gram);
  meta.lipschitz = meta.spectral_radius;
  meta.setup_bytes_up = cl.counters().bytes_up;
  meta.setup_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto solve_start = std::chrono::steady_clock::now();
  const std::uint64_t up0 = cl.counters().bytes_up;
  const std::uint64_t down0 = cl.counters().bytes_down;
  const SmoothOracle smooth = quadratic_oracle(gram, atb, 0.5 * bsq);
  FbsOptions opt;
  opt.tol = cfg.fbs_tol;
  opt.max_iter = cfg.fbs_max_iter;
  opt.lipschitz = meta.spectral_radius > 0.0 ? meta.spectral_radius * (1.0 + 1e-9) : 1.0;
  opt.on_iteration = [&](std::size_t it, double obj) {
    IterationRow row;
    row.k = it;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - solve_start).count();
    row.compute_seconds = cl.counters().compute_seconds;
    row.objective = obj;
    row.primal_residual = kNotApplicable;
    row.dual_residual = kNotApplicable;
    row.eps_primal = kNotApplicable;
    row.eps_dual = kNotApplicable;
    row.bytes_up = cl.counters().bytes_up - up0;
    row.bytes_down = cl.counters().bytes_down - down0;
    res.record.rows.push_back(row);
  };
  const Vector start = x0.empty() ? Vector(n, 0.0) : Vector(x0.begin(), x0.end());
  detail::require_dims(start.size() == n, "transpose_lasso: x0 length mismatch");
  InnerResult inner = fbs_solve(smooth, detail::L1Term{mu}, start, opt);

  res.x = std::move(inner.x);
  res.kkt_violation = lasso_kkt_violation(gram, atb, res.x, mu);
  meta.status = inner.converged ? Termination::converged : Termination::max_iter;
  meta.iterations = inner.iterations;
  meta.final_objective = lasso_objective(gram, atb, bsq, res.x, mu);
  meta.wall_seconds =
      meta.setup_seconds +
      std::chrono::duration<double>(std::chrono::steady_clock::now() - solve_start).count();
  meta.compute_seconds = cl.counters().compute_seconds;
  meta.bytes_up = cl.counters().bytes_up;
  meta.bytes_down = cl.counters().bytes_down;
  return res;
}

}  // namespace tadmm
