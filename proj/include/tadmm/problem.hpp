#pragma once

// Problem description shared by both solver families: a list of data
// blocks D_i, each carrying its own separable term f_i, plus the
// regularizers that act on x directly.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tadmm/data.hpp"
#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/prox.hpp"

namespace tadmm {

enum class ProblemKind { least_squares, logistic, svm, lasso, sparse_logistic, dual_lasso };

inline const char* to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::least_squares: return "least-squares";
    case ProblemKind::logistic: return "logistic";
    case ProblemKind::svm: return "svm";
    case ProblemKind::lasso: return "lasso";
    case ProblemKind::sparse_logistic: return "sparse-logistic";
    case ProblemKind::dual_lasso: return "dual-lasso";
  }
  return "unknown";
}

inline ProblemKind parse_problem_kind(const std::string& s) {
  for (auto k : {ProblemKind::least_squares, ProblemKind::logistic, ProblemKind::svm,
                 ProblemKind::lasso, ProblemKind::sparse_logistic, ProblemKind::dual_lasso})
    if (s == to_string(k)) return k;
  throw Error("unknown problem kind '" + s + "'");
}

/// One shard: rows of the (possibly augmented) data matrix and the
/// separable term applied to D_i x.
struct Block {
  DenseMatrix matrix;
  SeparableProx loss;

  std::size_t rows() const noexcept { return matrix.rows(); }
  std::size_t cols() const noexcept { return matrix.cols(); }
};

enum class Layout { rows, columns };

struct ProblemSpec {
  ProblemKind kind = ProblemKind::least_squares;
  Layout layout = Layout::rows;
  /// Row layout: one block per node, plus any augmentation blocks.
  std::vector<Block> blocks;
  /// Number of leading blocks that hold node data.
  std::size_t data_blocks = 0;
  /// Weight of 1/2 ||x||^2 (SVM).
  double ridge = 0.0;
  /// mu |x| not yet expressed as a block.
  double l1 = 0.0;
  /// SVM hinge weight C.
  double c = 0.0;
  /// Column layout (lasso before dualization): D split by columns and b.
  std::vector<DenseMatrix> column_blocks;
  Vector targets;

  std::size_t cols() const {
    if (layout == Layout::columns) {
      std::size_t n = 0;
      for (const auto& b : column_blocks) n += b.cols();
      return n;
    }
    return blocks.empty() ? 0 : blocks.front().cols();
  }

  std::size_t total_rows() const {
    std::size_t m = 0;
    for (const auto& b : blocks) m += b.rows();
    return m;
  }

  /// Rows held by data blocks (excludes augmentation).
  std::size_t data_rows() const {
    if (layout == Layout::columns) return targets.size();
    std::size_t m = 0;
    for (std::size_t i = 0; i < data_blocks; ++i) m += blocks[i].rows();
    return m;
  }

  std::size_t nodes() const {
    return layout == Layout::columns ? column_blocks.size() : data_blocks;
  }

  bool differentiable() const {
    if (l1 > 0.0) return false;
    for (const auto& b : blocks)
      if (!b.loss.differentiable()) return false;
    return true;
  }
};

namespace detail {

inline void check_row_shards(std::span<const RowShard> shards) {
  require(!shards.empty(), "problem: at least one shard is required");
  const std::size_t n = shards.front().matrix.cols();
  for (const auto& s : shards) {
    require_dims(s.matrix.cols() == n, "problem: shards disagree on column count");
    require_dims(s.targets.size() == s.matrix.rows(), "problem: shard target length mismatch");
  }
}

template <class MakeLoss>
ProblemSpec make_row_problem(ProblemKind kind, std::span<const RowShard> shards, MakeLoss make) {
  check_row_shards(shards);
  ProblemSpec p;
  p.kind = kind;
  for (const auto& s : shards) p.blocks.push_back(Block{s.matrix, make(s.targets)});
  p.data_blocks = p.blocks.size();
  return p;
}

}  // namespace detail

inline ProblemSpec make_least_squares(std::span<const RowShard> shards) {
  return detail::make_row_problem(ProblemKind::least_squares, shards,
                                  [](const Vector& b) { return SeparableProx::least_squares(b); });
}

inline ProblemSpec make_lasso(std::span<const RowShard> shards, double mu) {
  detail::require(mu >= 0.0, "lasso: mu must be >= 0");
  auto p = detail::make_row_problem(ProblemKind::lasso, shards,
                                    [](const Vector& b) { return SeparableProx::least_squares(b); });
  p.l1 = mu;
  return p;
}

inline ProblemSpec make_logistic(std::span<const RowShard> shards) {
  return detail::make_row_problem(ProblemKind::logistic, shards,
                                  [](const Vector& l) { return SeparableProx::logistic(l); });
}

inline ProblemSpec make_sparse_logistic(std::span<const RowShard> shards, double mu) {
  detail::require(mu >= 0.0, "sparse logistic: mu must be >= 0");
  auto p = make_logistic(shards);
  p.kind = ProblemKind::sparse_logistic;
  p.l1 = mu;
  return p;
}

/// 1/2 ||x||^2 + C sum hinge(D x).
inline ProblemSpec make_svm(std::span<const RowShard> shards, double c) {
  detail::require(c > 0.0, "svm: C must be positive");
  auto p = detail::make_row_problem(ProblemKind::svm, shards,
                                    [c](const Vector& l) { return SeparableProx::hinge(l, c); });
  p.ridge = 1.0;
  p.c = c;
  return p;
}

/// Lasso whose data matrix is split by columns across nodes.
inline ProblemSpec make_column_lasso(std::vector<DenseMatrix> column_blocks, Vector targets,
                                     double mu) {
  detail::require(!column_blocks.empty(), "column lasso: no column blocks");
  for (const auto& b : column_blocks)
    detail::require_dims(b.rows() == targets.size(), "column lasso: block rows must equal len(b)");
  detail::require(mu > 0.0, "column lasso: mu must be positive");
  ProblemSpec p;
  p.kind = ProblemKind::lasso;
  p.layout = Layout::columns;
  p.column_blocks = std::move(column_blocks);
  p.targets = std::move(targets);
  p.l1 = mu;
  return p;
}

/// Appends the block (I, mu |.|) so that mu |x| + f(Dx) becomes f_hat(D_hat x).
inline ProblemSpec augment_sparse(const ProblemSpec& problem, double mu) {
  detail::require(mu > 0.0, "augment_sparse: mu must be positive");
  detail::require(problem.layout == Layout::rows, "augment_sparse: needs a row-sharded problem");
  ProblemSpec p = problem;
  p.blocks.push_back(Block{DenseMatrix::identity(p.cols()), SeparableProx::l1(mu)});
  p.l1 = 0.0;
  if (p.kind == ProblemKind::logistic) p.kind = ProblemKind::sparse_logistic;
  return p;
}

/// Rewrites a column-sharded lasso as its dual
///   min_a 1/2 ||a + b||^2  s.t.  ||D^T a||_inf <= mu
/// in unwrapped form: D_hat = [I; D_1^T; ...; D_N^T], with the quadratic on
/// the identity rows and the l-infinity ball indicator on the rest.
inline ProblemSpec dualize_columns(const ProblemSpec& problem) {
  if (problem.kind != ProblemKind::lasso)
    throw Error("dualize_columns: only lasso problems can be dualized");
  if (problem.layout != Layout::columns)
    throw Error("dualize_columns: input is row-sharded; column shards are required");
  ProblemSpec d;
  d.kind = ProblemKind::dual_lasso;
  d.layout = Layout::rows;
  const std::size_t m = problem.targets.size();
  d.blocks.push_back(Block{DenseMatrix::identity(m), SeparableProx::quadratic(problem.targets)});
  for (const auto& cb : problem.column_blocks)
    d.blocks.push_back(Block{cb.transposed(), SeparableProx::linf_ball(problem.l1)});
  d.data_blocks = d.blocks.size();
  d.l1 = 0.0;
  d.column_blocks = problem.column_blocks;
  d.targets = problem.targets;
  d.c = problem.l1;  // keeps mu for reporting
  return d;
}

inline double dual_lasso_mu(const ProblemSpec& dual) { return dual.c; }

/// sum_i f_i(D_i x) + ridge/2 ||x||^2 + l1 |x|. Ball indicators are left out;
/// feasibility is reported through the primal residual instead.
inline double objective(const ProblemSpec& p, std::span<const double> x) {
  double total = 0.0;
  for (const auto& b : p.blocks) {
    if (b.loss.kind() == ProxKind::linf_projection) continue;
    total += b.loss.value(matvec(b.matrix, x));
  }
  if (p.ridge > 0.0) total += 0.5 * p.ridge * norm_sq(x);
  if (p.l1 > 0.0) total += p.l1 * norm1(x);
  return total;
}

/// Gradient of sum_i f_i(D_i x) + ridge/2 ||x||^2 (differentiable problems).
inline Vector objective_gradient(const ProblemSpec& p, std::span<const double> x) {
  detail::require(p.differentiable(), "objective_gradient: problem is not differentiable");
  Vector g(x.size(), 0.0);
  for (const auto& b : p.blocks) {
    const Vector gi = matvec(b.matrix, b.loss.gradient(matvec(b.matrix, x)), true);
    axpy(1.0, gi, g);
  }
  if (p.ridge > 0.0) axpy(p.ridge, x, g);
  return g;
}

/// Heuristic primal recovery for the dual lasso: least squares of
/// D_S x_S = alpha + b on the active set S = {j : |D^T alpha|_j >= (1 - tol) mu}.
inline Vector recover_lasso_primal(const ProblemSpec& dual, std::span<const double> alpha,
                                   double tol = 1e-6) {
  detail::require(dual.kind == ProblemKind::dual_lasso, "recover_lasso_primal: not a dual lasso");
  const DenseMatrix d = hstack(std::span<const DenseMatrix>(dual.column_blocks));
  const double mu = dual_lasso_mu(dual);
  const Vector corr = matvec(d, alpha, true);
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < corr.size(); ++j)
    if (std::abs(corr[j]) >= (1.0 - tol) * mu) active.push_back(j);
  Vector x(d.cols(), 0.0);
  if (active.empty()) return x;
  DenseMatrix ds(d.rows(), active.size());
  for (std::size_t r = 0; r < d.rows(); ++r)
    for (std::size_t a = 0; a < active.size(); ++a) ds(r, a) = d(r, active[a]);
  const Vector rhs = add(alpha, dual.targets);
  const GramContribution part = gram_accumulate(ds, std::span<const double>(rhs));
  const GramSystem sys = gram_reduce_with_fallback(std::span<const GramContribution>(&part, 1), 0.0);
  const Vector xs = sys.solve(*sys.agg_rhs());
  for (std::size_t a = 0; a < active.size(); ++a) x[active[a]] = xs[a];
  return x;
}

}  // namespace tadmm
