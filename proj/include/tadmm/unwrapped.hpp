#pragma once

// Unwrapped ADMM with transpose reduction:
//   x^{k+1} = (sum_i D_i^T D_i + s I)^{-1} sum_i D_i^T (y_i^k - lambda_i^k)
//   y_i^{k+1} = prox_{f_i}(D_i x^{k+1} + lambda_i^k, 1/tau)
//   lambda_i^{k+1} = lambda_i^k + D_i x^{k+1} - y_i^{k+1}
// where s = ridge / tau folds a 1/2 ||x||^2 term into the x-update.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tadmm/cluster.hpp"
#include "tadmm/config.hpp"
#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/problem.hpp"
#include "tadmm/prox.hpp"
#include "tadmm/record.hpp"

namespace tadmm {

/// x, and y_i / lambda_i for every block.
struct IterateState {
  Vector x;
  std::vector<Vector> y;
  std::vector<Vector> lambda;
  std::size_t k = 0;
};

struct ResidualReport {
  double primal = 0.0;
  double dual = std::numeric_limits<double>::infinity();
  double eps_primal = 0.0;
  double eps_dual = 0.0;

  bool converged() const { return primal <= eps_primal && dual <= eps_dual; }
};

/// Sums that determine the stopping test; additive across blocks.
struct ResidualParts {
  double primal_sq = 0.0;    // ||D x - y||^2
  double dx_sq = 0.0;        // ||D x||^2
  double y_sq = 0.0;         // ||y||^2
  Vector dual_dir;           // D^T (y^k - y^{k-1})
  Vector dual_var;           // D^T lambda
};

inline ResidualReport residuals(const ResidualParts& parts, std::size_t m, std::size_t n,
                                double tau, double eps_abs, double eps_rel, bool first) {
  ResidualReport r;
  r.primal = std::sqrt(parts.primal_sq);
  r.dual = first ? std::numeric_limits<double>::infinity() : tau * norm2(parts.dual_dir);
  r.eps_primal = std::sqrt(static_cast<double>(m)) * eps_abs +
                 eps_rel * std::max(std::sqrt(parts.dx_sq), std::sqrt(parts.y_sq));
  r.eps_dual = std::sqrt(static_cast<double>(n)) * eps_abs + eps_rel * tau * norm2(parts.dual_var);
  return r;
}

/// Residuals of a gathered state; `y_prev` is y^{k-1} (empty at k = 0).
inline ResidualReport residuals(const IterateState& state, const std::vector<Vector>& y_prev,
                                const ProblemSpec& problem, double tau, double eps_abs = 1e-6,
                                double eps_rel = 1e-3) {
  detail::require_dims(state.y.size() == problem.blocks.size() &&
                           state.lambda.size() == problem.blocks.size(),
                       "residuals: state does not match problem blocks");
  const std::size_t n = problem.cols();
  ResidualParts parts{0.0, 0.0, 0.0, Vector(n, 0.0), Vector(n, 0.0)};
  const bool first = state.k == 0 || y_prev.empty();
  for (std::size_t i = 0; i < problem.blocks.size(); ++i) {
    const auto& d = problem.blocks[i].matrix;
    const Vector dx = matvec(d, state.x);
    parts.primal_sq += dist_sq(dx, state.y[i]);
    parts.dx_sq += norm_sq(dx);
    parts.y_sq += norm_sq(state.y[i]);
    if (!first) axpy(1.0, matvec(d, subtract(state.y[i], y_prev[i]), true), parts.dual_dir);
    axpy(1.0, matvec(d, state.lambda[i], true), parts.dual_var);
  }
  return residuals(parts, problem.total_rows(), n, tau, eps_abs, eps_rel, first);
}

struct UnwrappedResult {
  Vector x;
  ConvergenceRecord record;
  IterateState state;
  std::vector<Vector> iterates;  // x^1, x^2, ... when keep_iterates is set
};

class UnwrappedSolver {
 public:
  struct Slot {
    Vector y;
    Vector lambda;
    Vector y_prev;
    Vector dx;
  };

  UnwrappedSolver(const ProblemSpec& problem, const SolverConfig& cfg,
                  const IterateState* start = nullptr)
      : problem_(prepare(problem)), cfg_(cfg) {
    validate(cfg_);
    tau_ = effective_tau(cfg_, problem_.data_rows());
    const auto t0 = std::chrono::steady_clock::now();

    if (cfg_.use_lookup) attach_lookup();

    std::vector<Slot> slots;
    for (std::size_t i = 0; i < problem_.blocks.size(); ++i) {
      const std::size_t r = problem_.blocks[i].rows();
      Slot s{Vector(r, 0.0), Vector(r, 0.0), Vector(r, 0.0), Vector(r, 0.0)};
      if (start) {
        detail::require_dims(start->y.size() == problem_.blocks.size() &&
                                 start->lambda.size() == problem_.blocks.size(),
                             "unwrapped_admm: warm start does not match problem blocks");
        detail::require_dims(start->y[i].size() == r && start->lambda[i].size() == r,
                             "unwrapped_admm: warm start block length mismatch");
        s.y = start->y[i];
        s.lambda = start->lambda[i];
        s.y_prev = s.y;
      }
      slots.push_back(std::move(s));
    }
    cluster_ = std::make_unique<Cluster<Block, Slot>>(problem_.blocks, std::move(slots), cfg_.lanes);
    const std::size_t n = cluster_->cols();
    x_ = start ? start->x : Vector(n, 0.0);
    detail::require_dims(x_.size() == n, "unwrapped_admm: warm start x length mismatch");

    // Setup: every worker uploads D_i^T D_i once.
    auto parts = cluster_->all_execute(
        [](std::size_t, const Block& b, Slot&) { return gram_accumulate(b.matrix); });
    cluster_->count_upload(8u * n * n * cluster_->size());
    std::string warning;
    sys_.emplace(gram_reduce_with_fallback(std::span<const GramContribution>(parts),
                                           problem_.ridge / tau_, &warning));
    if (!warning.empty()) record_.meta.warnings.push_back(warning);

    DenseMatrix plain = sys_->gram();
    for (std::size_t i = 0; i < n; ++i) plain(i, i) -= sys_->ridge();
    auto& meta = record_.meta;
    meta.solver = "unwrapped";
    meta.problem = to_string(problem_.kind);
    meta.m = problem_.data_rows();
    meta.n = n;
    meta.nodes = problem_.nodes();
    meta.tau = tau_;
    meta.seed = cfg_.seed;
    meta.spectral_radius = spectral_radius(plain);
    if (problem_.differentiable()) {
      double lip = 0.0;
      for (const auto& b : problem_.blocks) lip = std::max(lip, b.loss.gradient_lipschitz());
      meta.lipschitz = lip;
      meta.bound_constant = (lip + tau_) * (lip + tau_) * meta.spectral_radius;
    }
    meta.setup_bytes_up = cluster_->counters().bytes_up;
    meta.setup_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    last_up_ = cluster_->counters().bytes_up;
    last_down_ = cluster_->counters().bytes_down;
    k_ = start ? start->k : 0;
    start_time_ = std::chrono::steady_clock::now();
  }

  double tau() const noexcept { return tau_; }
  const ProblemSpec& problem() const noexcept { return problem_; }
  const GramSystem& system() const { return *sys_; }
  const Vector& x() const noexcept { return x_; }
  std::size_t iteration() const noexcept { return k_; }
  const ConvergenceRecord& record() const noexcept { return record_; }
  const CommCounters& counters() const { return cluster_->counters(); }

  IterateState gather() const {
    IterateState s{x_, {}, {}, k_};
    for (std::size_t i = 0; i < cluster_->size(); ++i) {
      s.y.push_back(cluster_->state(i).y);
      s.lambda.push_back(cluster_->state(i).lambda);
    }
    return s;
  }

  std::vector<Vector> previous_y() const {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < cluster_->size(); ++i) out.push_back(cluster_->state(i).y_prev);
    return out;
  }

  /// One iteration followed by the diagnostic pass. Returns the logged row.
  const IterationRow& step() {
    auto& cl = *cluster_;
    const double delta = 1.0 / tau_;

    auto d = cl.all_execute([](std::size_t, const Block& b, Slot& s) {
      return matvec(b.matrix, subtract(s.y, s.lambda), true);
    });
    const CollectiveResult sum = cl.reduce_sum(std::span<const Vector>(d));
    x_ = sys_->solve(sum.payload);
    cl.broadcast(x_);

    const Vector& xb = cl.broadcast_value();
    cl.all_execute([&](std::size_t, const Block& b, Slot& s) {
      matvec_into(b.matrix, xb, false, s.dx);
      s.y_prev = s.y;
      Vector z(s.dx.size());
      for (std::size_t r = 0; r < z.size(); ++r) z[r] = s.dx[r] + s.lambda[r];
      b.loss.prox_into(z, delta, s.y);
      for (std::size_t r = 0; r < z.size(); ++r) s.lambda[r] += s.dx[r] - s.y[r];
    });
    ++k_;

    IterationRow row = diagnostics();
    record_.rows.push_back(row);
    return record_.rows.back();
  }

  bool converged(const IterationRow& row) const {
    return row.primal_residual <= row.eps_primal && row.dual_residual <= row.eps_dual;
  }

  UnwrappedResult run() {
    UnwrappedResult res;
    record_.meta.status = Termination::max_iter;
    for (std::size_t it = 0; it < cfg_.max_iter; ++it) {
      const IterationRow& row = step();
      if (cfg_.keep_iterates) res.iterates.push_back(x_);
      if (converged(row)) {
        record_.meta.status = Termination::converged;
        break;
      }
    }
    finish();
    res.x = x_;
    res.state = gather();
    res.record = record_;
    return res;
  }

  void finish() {
    auto& meta = record_.meta;
    meta.iterations = record_.rows.size();
    meta.final_objective = record_.rows.empty() ? objective(problem_, x_)
                                                : record_.rows.back().objective;
    meta.wall_seconds =
        meta.setup_seconds +
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time_).count();
    meta.compute_seconds = cluster_->counters().compute_seconds;
    meta.bytes_up = cluster_->counters().bytes_up;
    meta.bytes_down = cluster_->counters().bytes_down;
  }

 private:
  struct Diag {
    double primal_sq = 0.0;
    double step_sq = 0.0;
    double dx_sq = 0.0;
    double y_sq = 0.0;
    double value = 0.0;
    Vector dual_dir;
    Vector dual_var;
    Vector grad;
  };

  static ProblemSpec prepare(const ProblemSpec& p) {
    if (p.layout == Layout::columns)
      throw Error("unwrapped_admm: column-sharded lasso must be dualized first");
    detail::require(!p.blocks.empty(), "unwrapped_admm: problem has no blocks");
    return p.l1 > 0.0 ? augment_sparse(p, p.l1) : p;
  }

  void attach_lookup() {
    bool any = false;
    for (const auto& b : problem_.blocks) any = any || b.loss.kind() == ProxKind::logistic;
    if (!any) return;
    auto table = std::make_shared<const ProxLookupTable>(build_lookup(1.0 / tau_));
    for (auto& b : problem_.blocks)
      if (b.loss.kind() == ProxKind::logistic) b.loss.set_lookup(table);
  }

  IterationRow diagnostics() {
    auto& cl = *cluster_;
    const bool smooth = problem_.differentiable();
    auto parts = cl.all_execute(
        [&](std::size_t, const Block& b, Slot& s) {
          Diag g;
          g.primal_sq = dist_sq(s.dx, s.y);
          g.step_sq = dist_sq(s.y, s.y_prev);
          g.dx_sq = norm_sq(s.dx);
          g.y_sq = norm_sq(s.y);
          if (b.loss.kind() != ProxKind::linf_projection) g.value = b.loss.value(s.dx);
          g.dual_dir = matvec(b.matrix, subtract(s.y, s.y_prev), true);
          g.dual_var = matvec(b.matrix, s.lambda, true);
          if (smooth) g.grad = matvec(b.matrix, b.loss.gradient(s.dx), true);
          return g;
        },
        Phase::diagnostic);

    const std::size_t n = cl.cols();
    ResidualParts rp{0.0, 0.0, 0.0, Vector(n, 0.0), Vector(n, 0.0)};
    double step_sq = 0.0, value = 0.0;
    Vector grad(n, 0.0);
    for (const auto& g : parts) {
      rp.primal_sq += g.primal_sq;
      rp.dx_sq += g.dx_sq;
      rp.y_sq += g.y_sq;
      step_sq += g.step_sq;
      value += g.value;
      axpy(1.0, g.dual_dir, rp.dual_dir);
      axpy(1.0, g.dual_var, rp.dual_var);
      if (smooth) axpy(1.0, g.grad, grad);
    }
    cl.count_upload(8u * (5 + (smooth ? 3 : 2) * n) * cl.size(), Phase::diagnostic);

    const ResidualReport rr =
        residuals(rp, cl.total_rows(), n, tau_, cfg_.eps_abs, cfg_.eps_rel, false);
    IterationRow row;
    row.k = k_;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time_).count();
    row.compute_seconds = cl.counters().compute_seconds;
    row.barrier_wait_seconds = cl.counters().barrier_wait_seconds;
    if (problem_.ridge > 0.0) value += 0.5 * problem_.ridge * norm_sq(x_);
    row.objective = value;
    row.primal_residual = rr.primal;
    row.dual_residual = rr.dual;
    row.eps_primal = rr.eps_primal;
    row.eps_dual = rr.eps_dual;
    row.residual_bound_lhs = step_sq + rp.primal_sq;
    if (smooth) {
      if (problem_.ridge > 0.0) axpy(problem_.ridge, x_, grad);
      row.grad_norm_sq = norm_sq(grad);
    }
    row.bytes_up = cl.counters().bytes_up - last_up_;
    row.bytes_down = cl.counters().bytes_down - last_down_;
    last_up_ = cl.counters().bytes_up;
    last_down_ = cl.counters().bytes_down;
    return row;
  }

  ProblemSpec problem_;
  SolverConfig cfg_;
  double tau_ = 1.0;
  std::unique_ptr<Cluster<Block, Slot>> cluster_;
  std::optional<GramSystem> sys_;
  Vector x_;
  std::size_t k_ = 0;
  ConvergenceRecord record_;
  std::uint64_t last_up_ = 0;
  std::uint64_t last_down_ = 0;
  std::chrono::steady_clock::time_point start_time_;
};

/// Runs unwrapped ADMM to convergence or max_iter. A positive l1 weight is
/// handled by appending the (I, mu |.|) block.
inline UnwrappedResult unwrapped_admm(const ProblemSpec& problem, const SolverConfig& cfg,
                                      const IterateState* start = nullptr) {
  UnwrappedSolver solver(problem, cfg, start);
  return solver.run();
}

/// Dual lasso outputs: alpha, its objective, and the active set of the ball constraint.
struct DualLassoReport {
  Vector alpha;
  double dual_objective = 0.0;
  double max_correlation = 0.0;  // ||D^T alpha||_inf
  std::vector<std::size_t> active_set;
};

inline DualLassoReport dual_lasso_report(const ProblemSpec& dual, std::span<const double> alpha,
                                         double tol = 1e-6) {
  detail::require(dual.kind == ProblemKind::dual_lasso, "dual_lasso_report: not a dual lasso");
  DualLassoReport r;
  r.alpha.assign(alpha.begin(), alpha.end());
  r.dual_objective = 0.5 * norm_sq(add(alpha, dual.targets));
  const double mu = dual_lasso_mu(dual);
  std::size_t offset = 0;
  for (const auto& cb : dual.column_blocks) {
    const Vector corr = matvec(cb, alpha, true);
    for (std::size_t j = 0; j < corr.size(); ++j) {
      r.max_correlation = std::max(r.max_correlation, std::abs(corr[j]));
      if (std::abs(corr[j]) >= (1.0 - tol) * mu) r.active_set.push_back(offset + j);
    }
    offset += cb.cols();
  }
  return r;
}

}  // namespace tadmm
