#pragma once

// Consensus ADMM: every node keeps its own copy x_i, tied to a global z.
//   x_i = argmin f_i(D_i x) + r/2 ||x||^2 + tau/2 ||x - z + lambda_i||^2
//   z   = center update of mean(x_i + lambda_i)
//   lambda_i += x_i - z

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
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

enum class CenterTerm { none, l1, ridge };

/// Regularizer owned by the central server.
struct CenterRegularizer {
  CenterTerm kind = CenterTerm::none;
  /// l1 weight mu, or the weight of 1/2 ||z||^2.
  double weight = 0.0;
  /// Coordinate left unshrunk by the ridge variant.
  std::optional<std::size_t> bias_index;
};

/// z from the sum of x_i + lambda_i over n_nodes nodes.
inline Vector z_update_from_sum(std::span<const double> sum, std::size_t n_nodes,
                                const CenterRegularizer& reg, double tau) {
  detail::require(n_nodes >= 1, "z_update: at least one node is required");
  detail::require(tau > 0.0, "z_update: tau must be positive");
  const double nt = static_cast<double>(n_nodes) * tau;
  Vector z(sum.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = sum[j] / static_cast<double>(n_nodes);
  switch (reg.kind) {
    case CenterTerm::none: break;
    case CenterTerm::l1:
      for (double& v : z) v = soft_threshold(v, reg.weight / nt);
      break;
    case CenterTerm::ridge: {
      const double shrink = nt / (reg.weight + nt);
      for (std::size_t j = 0; j < z.size(); ++j)
        if (!reg.bias_index || *reg.bias_index != j) z[j] *= shrink;
      break;
    }
  }
  return z;
}

inline Vector z_update(std::span<const Vector> xs, std::span<const Vector> lambdas,
                       const CenterRegularizer& reg, double tau) {
  detail::require(!xs.empty(), "z_update: at least one node is required");
  detail::require_dims(xs.size() == lambdas.size(), "z_update: x and lambda counts differ");
  const std::size_t n = xs.front().size();
  Vector sum(n, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::require_dims(xs[i].size() == n && lambdas[i].size() == n,
                         "z_update: node vectors differ in length");
    axpy(1.0, xs[i], sum);
    axpy(1.0, lambdas[i], sum);
  }
  return z_update_from_sum(sum, xs.size(), reg, tau);
}

/// Where the 1/2 ||x||^2 term of a problem goes in consensus form.
enum class RidgePlacement {
  /// Each node carries ridge / N, so the nodes sum to the original problem.
  shared,
  /// Each node carries the full ridge term.
  replicated,
};

struct ConsensusOptions {
  RidgePlacement ridge_placement = RidgePlacement::shared;
};

struct ConsensusResult {
  Vector z;
  ConvergenceRecord record;
  std::vector<Vector> x;
  std::vector<Vector> lambda;
};

namespace detail {

struct ConsensusSlot {
  Vector x;
  Vector lambda;
  DualSvmState svm;
  std::optional<GramSystem> local;  // D_i^T D_i + (r + tau) I, quadratic losses
  Vector atb;                       // D_i^T b_i
  std::size_t inner = 0;
  bool inexact = false;
};

inline LbfgsResult logistic_node(const Block& b, double ridge, double tau,
                                 std::span<const double> center, std::span<const double> x0,
                                 const LbfgsOptions& opt) {
  const auto labels = b.loss.data();
  const std::size_t m = b.rows();
  Vector dx(m), w(m);
  auto f = [&](std::span<const double> x, std::span<double> g) {
    matvec_into(b.matrix, x, false, dx);
    double v = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double t = labels[r] * dx[r];
      v += logistic_loss(t);
      w[r] = -labels[r] * sigmoid_neg(t);
    }
    matvec_into(b.matrix, w, true, g);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - center[j];
      v += 0.5 * ridge * x[j] * x[j] + 0.5 * tau * d * d;
      g[j] += ridge * x[j] + tau * d;
    }
    return v;
  };
  return lbfgs_solve(f, x0, opt);
}

}  // namespace detail

class ConsensusSolver {
 public:
  using Slot = detail::ConsensusSlot;

  ConsensusSolver(const ProblemSpec& problem, const SolverConfig& cfg,
                  const ConsensusOptions& opt = {})
      : problem_(problem), cfg_(cfg), opt_(opt) {
    validate(cfg_);
    if (problem_.layout != Layout::rows)
      throw Error("consensus_admm: needs a row-sharded problem");
    detail::require(problem_.data_blocks >= 1 && problem_.data_blocks == problem_.blocks.size(),
                    "consensus_admm: augmented problems are not supported; pass the l1 weight");
    tau_ = effective_tau(cfg_, problem_.data_rows());
    const std::size_t nodes = problem_.blocks.size();
    node_ridge_ = opt_.ridge_placement == RidgePlacement::shared
                      ? problem_.ridge / static_cast<double>(nodes)
                      : problem_.ridge;
    if (problem_.l1 > 0.0) center_ = CenterRegularizer{CenterTerm::l1, problem_.l1, std::nullopt};
    for (const auto& b : problem_.blocks) {
      const auto k = b.loss.kind();
      detail::require(k == ProxKind::quadratic || k == ProxKind::logistic || k == ProxKind::hinge,
                      std::string("consensus_admm: no node solver for ") + to_string(k));
      if (k == ProxKind::hinge)
        detail::require(node_ridge_ > 0.0, "consensus_admm: hinge nodes need a ridge term");
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = problem_.cols();
    std::vector<Slot> slots(nodes);
    for (auto& s : slots) {
      s.x.assign(n, 0.0);
      s.lambda.assign(n, 0.0);
    }
    cluster_ = std::make_unique<Cluster<Block, Slot>>(problem_.blocks, std::move(slots), cfg_.lanes);
    const double shift = node_ridge_ + tau_;
    cluster_->all_execute([shift](std::size_t, const Block& b, Slot& s) {
      if (b.loss.kind() != ProxKind::quadratic) return;
      const Vector targets = scaled(b.loss.data(), -1.0);
      GramContribution g = gram_accumulate(b.matrix, std::span<const double>(targets));
      s.atb = *g.rhs;
      s.local.emplace(gram_reduce(std::span<const GramContribution>(&g, 1), shift));
    });
    z_.assign(n, 0.0);

    auto& meta = record_.meta;
    meta.solver = "consensus";
    meta.problem = to_string(problem_.kind);
    meta.m = problem_.data_rows();
    meta.n = n;
    meta.nodes = nodes;
    meta.tau = tau_;
    meta.seed = cfg_.seed;
    if (opt_.ridge_placement == RidgePlacement::replicated && problem_.ridge > 0.0)
      meta.warnings.push_back("ridge term replicated on every node");
    meta.setup_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    start_time_ = std::chrono::steady_clock::now();
  }

  double tau() const noexcept { return tau_; }
  const Vector& z() const noexcept { return z_; }
  const ConvergenceRecord& record() const noexcept { return record_; }
  const CommCounters& counters() const { return cluster_->counters(); }
  const CenterRegularizer& center() const noexcept { return center_; }
  double node_ridge() const noexcept { return node_ridge_; }

  const IterationRow& step() {
    auto& cl = *cluster_;
    const std::size_t nodes = cl.size();
    const Vector& zb = cl.broadcast_value().empty() ? z_ : cl.broadcast_value();
    const double tau = tau_;
    const double ridge = node_ridge_;
    const LbfgsOptions lopt{10, cfg_.inner_tol, cfg_.inner_max_iter};
    const SvmOptions sopt{cfg_.inner_tol, cfg_.inner_max_iter};

    auto sums = cl.all_execute([&](std::size_t, const Block& b, Slot& s) {
      const Vector center = subtract(zb, s.lambda);
      s.inner = 0;
      s.inexact = false;
      switch (b.loss.kind()) {
        case ProxKind::quadratic: {
          Vector rhs = s.atb;
          axpy(tau, center, rhs);
          s.x = s.local->solve(rhs);
          s.inner = 1;
          break;
        }
        case ProxKind::logistic: {
          LbfgsResult r = detail::logistic_node(b, ridge, tau, center, s.x, lopt);
          s.x = std::move(r.x);
          s.inner = r.iterations;
          s.inexact = !r.converged;
          break;
        }
        case ProxKind::hinge: {
          const double c = b.loss.scale() / ridge;
          SvmResult r = svm_dual_cd(b.matrix, b.loss.data(), c, tau / ridge, center,
                                    s.svm.alpha.empty() ? nullptr : &s.svm, sopt);
          s.x = std::move(r.w);
          s.svm = std::move(r.state);
          s.inner = r.passes;
          s.inexact = !r.converged;
          break;
        }
        default: throw Error("consensus_admm: unsupported node loss");
      }
      return add(s.x, s.lambda);
    });
    const CollectiveResult sum = cl.reduce_sum(std::span<const Vector>(sums));
    Vector z_prev = z_;
    z_ = z_update_from_sum(sum.payload, nodes, center_, tau_);
    cl.broadcast(z_);
    const Vector& znew = cl.broadcast_value();
    cl.all_execute([&](std::size_t, const Block&, Slot& s) {
      for (std::size_t j = 0; j < s.lambda.size(); ++j) s.lambda[j] += s.x[j] - znew[j];
    });
    ++k_;

    record_.rows.push_back(diagnostics(z_prev));
    return record_.rows.back();
  }

  static bool converged(const IterationRow& row) {
    return row.primal_residual <= row.eps_primal && row.dual_residual <= row.eps_dual;
  }

  ConsensusResult run() {
    record_.meta.status = Termination::max_iter;
    for (std::size_t it = 0; it < cfg_.max_iter; ++it) {
      if (converged(step())) {
        record_.meta.status = Termination::converged;
        break;
      }
    }
    finish();
    ConsensusResult res;
    res.z = z_;
    res.record = record_;
    for (std::size_t i = 0; i < cluster_->size(); ++i) {
      res.x.push_back(cluster_->state(i).x);
      res.lambda.push_back(cluster_->state(i).lambda);
    }
    return res;
  }

  void finish() {
    auto& meta = record_.meta;
    meta.iterations = record_.rows.size();
    meta.final_objective = record_.rows.empty() ? objective(problem_, z_)
                                                : record_.rows.back().objective;
    meta.wall_seconds =
        meta.setup_seconds +
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time_).count();
    meta.compute_seconds = cluster_->counters().compute_seconds;
    meta.bytes_up = cluster_->counters().bytes_up;
    meta.bytes_down = cluster_->counters().bytes_down;
    if (meta.inexact_steps > 0)
      meta.warnings.push_back(std::to_string(meta.inexact_steps) +
                              " node solves stopped before reaching the inner tolerance");
  }

 private:
  struct Diag {
    double gap_sq = 0.0;
    double x_sq = 0.0;
    double lambda_sq = 0.0;
    double value = 0.0;
    std::size_t inner = 0;
    bool inexact = false;
    Vector grad;
  };

  IterationRow diagnostics(const Vector& z_prev) {
    auto& cl = *cluster_;
    const bool smooth = problem_.differentiable();
    const Vector& z = z_;
    auto parts = cl.all_execute(
        [&](std::size_t, const Block& b, Slot& s) {
          Diag g;
          g.gap_sq = dist_sq(s.x, z);
          g.x_sq = norm_sq(s.x);
          g.lambda_sq = norm_sq(s.lambda);
          const Vector dz = matvec(b.matrix, z);
          g.value = b.loss.value(dz);
          g.inner = s.inner;
          g.inexact = s.inexact;
          if (smooth) g.grad = matvec(b.matrix, b.loss.gradient(dz), true);
          return g;
        },
        Phase::diagnostic);
    const std::size_t n = cl.cols();
    const double nodes = static_cast<double>(cl.size());
    double gap = 0.0, xs = 0.0, ls = 0.0, value = 0.0;
    std::size_t inner = 0;
    Vector grad(n, 0.0);
    for (const auto& g : parts) {
      gap += g.gap_sq;
      xs += g.x_sq;
      ls += g.lambda_sq;
      value += g.value;
      inner += g.inner;
      if (g.inexact) ++record_.meta.inexact_steps;
      if (smooth) axpy(1.0, g.grad, grad);
    }
    cl.count_upload(8u * (5 + (smooth ? n : 0)) * cl.size(), Phase::diagnostic);

    IterationRow row;
    row.k = k_;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time_).count();
    row.compute_seconds = cl.counters().compute_seconds;
    row.barrier_wait_seconds = cl.counters().barrier_wait_seconds;
    if (problem_.ridge > 0.0) value += 0.5 * problem_.ridge * norm_sq(z);
    if (problem_.l1 > 0.0) value += problem_.l1 * norm1(z);
    row.objective = value;
    const double root = std::sqrt(static_cast<double>(n) * nodes);
    row.primal_residual = std::sqrt(gap);
    row.dual_residual = tau_ * std::sqrt(nodes) * std::sqrt(dist_sq(z, z_prev));
    row.eps_primal =
        root * cfg_.eps_abs + cfg_.eps_rel * std::max(std::sqrt(xs), std::sqrt(nodes) * norm2(z));
    row.eps_dual = root * cfg_.eps_abs + cfg_.eps_rel * tau_ * std::sqrt(ls);
    if (smooth) {
      if (problem_.ridge > 0.0) axpy(problem_.ridge, z, grad);
      row.grad_norm_sq = norm_sq(grad);
    }
    row.bytes_up = cl.counters().bytes_up - last_up_;
    row.bytes_down = cl.counters().bytes_down - last_down_;
    row.inner_iterations = inner;
    last_up_ = cl.counters().bytes_up;
    last_down_ = cl.counters().bytes_down;
    return row;
  }

  ProblemSpec problem_;
  SolverConfig cfg_;
  ConsensusOptions opt_;
  double tau_ = 1.0;
  double node_ridge_ = 0.0;
  CenterRegularizer center_;
  std::unique_ptr<Cluster<Block, Slot>> cluster_;
  Vector z_;
  std::size_t k_ = 0;
  ConvergenceRecord record_;
  std::uint64_t last_up_ = 0;
  std::uint64_t last_down_ = 0;
  std::chrono::steady_clock::time_point start_time_;
};

inline ConsensusResult consensus_admm(const ProblemSpec& problem, const SolverConfig& cfg,
                                      const ConsensusOptions& opt = {}) {
  ConsensusSolver solver(problem, cfg, opt);
  return solver.run();
}

}  // namespace tadmm
