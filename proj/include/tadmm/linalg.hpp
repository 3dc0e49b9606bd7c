#pragma once

// Dense row-major storage, shard-local Gram products and the cached
// Cholesky solve used by every global least-squares x-update.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <type_traits>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tadmm/error.hpp"

namespace tadmm {

using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }
inline double norm2(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm1(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline double dist_sq(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "dist_sq: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  detail::require_dims(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "subtract: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vector add(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "add: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector scaled(std::span<const double> a, double s) {
  Vector out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// DenseMatrix

class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, Vector values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    detail::require_dims(values_.size() == rows_ * cols_,
                         "DenseMatrix: value count " + std::to_string(values_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    if (!tadmm::all_finite(values_)) throw NonFiniteError("DenseMatrix: non-finite entry");
  }

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Vector vals;
    vals.reserve(r * c);
    for (const auto& row : rows) {
      detail::require_dims(row.size() == c, "DenseMatrix::from_rows: ragged rows");
      vals.insert(vals.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(vals));
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool all_finite() const { return tadmm::all_finite(values_); }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  DenseMatrix row_block(std::size_t begin, std::size_t count) const {
    detail::require_dims(begin + count <= rows_, "row_block: out of range");
    Vector vals(values_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                values_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_));
    return DenseMatrix(count, cols_, std::move(vals));
  }

  DenseMatrix col_block(std::size_t begin, std::size_t count) const {
    detail::require_dims(begin + count <= cols_, "col_block: out of range");
    DenseMatrix out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < count; ++c) out(r, c) = (*this)(r, begin + c);
    return out;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector values_;
};

inline DenseMatrix vstack(std::span<const DenseMatrix> blocks) {
  detail::require_dims(!blocks.empty(), "vstack: no blocks");
  const std::size_t cols = blocks.front().cols();
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    detail::require_dims(b.cols() == cols, "vstack: column count mismatch");
    rows += b.rows();
  }
  Vector vals;
  vals.reserve(rows * cols);
  for (const auto& b : blocks) vals.insert(vals.end(), b.values().begin(), b.values().end());
  return DenseMatrix(rows, cols, std::move(vals));
}

inline DenseMatrix hstack(std::span<const DenseMatrix> blocks) {
  detail::require_dims(!blocks.empty(), "hstack: no blocks");
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    detail::require_dims(b.rows() == rows, "hstack: row count mismatch");
    cols += b.cols();
  }
  DenseMatrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < b.cols(); ++c) out(r, offset + c) = b(r, c);
    offset += b.cols();
  }
  return out;
}

/// Matrix-vector product, or the transposed product when `transposed` is set.
inline void matvec_into(const DenseMatrix& mat, std::span<const double> v, bool transposed,
                       std::span<double> out) {
  if (!transposed) {
    detail::require_dims(v.size() == mat.cols() && out.size() == mat.rows(),
                         "apply: dimension mismatch");
    for (std::size_t r = 0; r < mat.rows(); ++r) {
      const auto row = mat.row(r);
      double s = 0.0;
      for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * v[c];
      out[r] = s;
    }
  } else {
    detail::require_dims(v.size() == mat.rows() && out.size() == mat.cols(),
                         "apply (transposed): dimension mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < mat.rows(); ++r) {
      const double vr = v[r];
      if (vr == 0.0) continue;
      const auto row = mat.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * vr;
    }
  }
}

inline Vector matvec(const DenseMatrix& mat, std::span<const double> v, bool transposed = false) {
  Vector out(transposed ? mat.cols() : mat.rows());
  matvec_into(mat, v, transposed, out);
  return out;
}

// ---------------------------------------------------------------------------
// Gram reduction

/// One shard's share of the normal equations: D_i^T D_i, and optionally
/// D_i^T b_i together with ||b_i||^2.
struct GramContribution {
  DenseMatrix gram;
  std::optional<Vector> rhs;
  double rhs_norm_sq = 0.0;
};

inline GramContribution gram_accumulate(const DenseMatrix& shard,
                                        std::optional<std::span<const double>> rhs_src = {}) {
  detail::require_dims(shard.rows() >= 1, "gram_accumulate: shard has no rows");
  if (!shard.all_finite()) throw NonFiniteError("gram_accumulate: non-finite shard entry");
  const std::size_t n = shard.cols();
  GramContribution out{DenseMatrix(n, n), std::nullopt, 0.0};
  DenseMatrix& g = out.gram;
  for (std::size_t r = 0; r < shard.rows(); ++r) {
    const auto row = shard.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      const double ri = row[i];
      if (ri == 0.0) continue;
      for (std::size_t j = i; j < n; ++j) g(i, j) += ri * row[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);

  if (rhs_src) {
    detail::require_dims(rhs_src->size() == shard.rows(),
                         "gram_accumulate: rhs length does not match shard rows");
    if (!all_finite(*rhs_src)) throw NonFiniteError("gram_accumulate: non-finite rhs entry");
    out.rhs = matvec(shard, *rhs_src, true);
    out.rhs_norm_sq = norm_sq(*rhs_src);
  }
  return out;
}

/// Sums contributions in ascending index order.
inline GramContribution gram_sum(std::span<const GramContribution> parts) {
  detail::require_dims(!parts.empty(), "gram_sum: no contributions");
  const std::size_t n = parts.front().gram.rows();
  const bool with_rhs = parts.front().rhs.has_value();
  GramContribution total{DenseMatrix(n, n), std::nullopt, 0.0};
  if (with_rhs) total.rhs = Vector(n, 0.0);
  for (const auto& p : parts) {
    detail::require_dims(p.gram.rows() == n && p.gram.cols() == n,
                         "gram_sum: contributions differ in dimension");
    detail::require_dims(p.rhs.has_value() == with_rhs,
                         "gram_sum: contributions disagree on rhs presence");
    auto dst = total.gram.values();
    const auto src = p.gram.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    if (with_rhs) {
      detail::require_dims(p.rhs->size() == n, "gram_sum: rhs length mismatch");
      axpy(1.0, *p.rhs, *total.rhs);
    }
    total.rhs_norm_sq += p.rhs_norm_sq;
  }
  return total;
}

inline double trace(const DenseMatrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) t += m(i, i);
  return t;
}

/// Lower-triangular Cholesky factor L with L L^T = a.
inline DenseMatrix cholesky(const DenseMatrix& a) {
  detail::require_dims(a.rows() == a.cols(), "cholesky: matrix is not square");
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw SingularMatrixError(j, d);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Factorized (sum_i D_i^T D_i + ridge I). Immutable once built.
class GramSystem {
 public:
  GramSystem(DenseMatrix shifted_gram, double ridge, std::optional<Vector> agg_rhs,
             double rhs_norm_sq)
      : gram_(std::move(shifted_gram)),
        factor_(cholesky(gram_)),
        ridge_(ridge),
        agg_rhs_(std::move(agg_rhs)),
        rhs_norm_sq_(rhs_norm_sq) {}

  std::size_t dim() const noexcept { return gram_.rows(); }
  double ridge() const noexcept { return ridge_; }
  const DenseMatrix& factor() const noexcept { return factor_; }
  /// The shifted Gram matrix that was factorized.
  const DenseMatrix& gram() const noexcept { return gram_; }
  const std::optional<Vector>& agg_rhs() const noexcept { return agg_rhs_; }
  double rhs_norm_sq() const noexcept { return rhs_norm_sq_; }

  /// Two triangular solves against the cached factor.
  Vector solve(std::span<const double> rhs) const {
    const std::size_t n = dim();
    detail::require_dims(rhs.size() == n, "solve_spd: rhs length " + std::to_string(rhs.size()) +
                                              " does not match system dimension " +
                                              std::to_string(n));
    Vector v(rhs.begin(), rhs.end());
    for (std::size_t i = 0; i < n; ++i) {
      double s = v[i];
      const auto li = factor_.row(i);
      for (std::size_t k = 0; k < i; ++k) s -= li[k] * v[k];
      v[i] = s / li[i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = v[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= factor_(k, ii) * v[k];
      v[ii] = s / factor_(ii, ii);
    }
    return v;
  }

 private:
  DenseMatrix gram_;
  DenseMatrix factor_;
  double ridge_;
  std::optional<Vector> agg_rhs_;
  double rhs_norm_sq_;
};

inline GramSystem gram_reduce(std::span<const GramContribution> parts, double ridge) {
  detail::require(ridge >= 0.0 && std::isfinite(ridge), "gram_reduce: ridge must be >= 0");
  GramContribution total = gram_sum(parts);
  for (std::size_t i = 0; i < total.gram.rows(); ++i) total.gram(i, i) += ridge;
  return GramSystem(std::move(total.gram), ridge, std::move(total.rhs), total.rhs_norm_sq);
}

/// gram_reduce with the retry policy: a failed factorization at ridge 0 is
/// retried once with ridge 1e-10 * trace / n. `warning` receives a message
/// when the retry was needed.
inline GramSystem gram_reduce_with_fallback(std::span<const GramContribution> parts, double ridge,
                                            std::string* warning = nullptr) {
  try {
    return gram_reduce(parts, ridge);
  } catch (const SingularMatrixError& e) {
    if (ridge != 0.0) throw;
    const GramContribution total = gram_sum(parts);
    const std::size_t n = total.gram.rows();
    const double shift = 1e-10 * trace(total.gram) / static_cast<double>(n);
    if (!(shift > 0.0)) throw;
    if (warning)
      *warning = std::string("Gram matrix singular (") + e.what() + "); retrying with ridge " +
                 std::to_string(shift);
    return gram_reduce(parts, shift);
  }
}

inline Vector solve_spd(const GramSystem& sys, std::span<const double> rhs) {
  return sys.solve(rhs);
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from a fixed start vector.
inline double spectral_radius(const DenseMatrix& sym, std::size_t iters = 2000) {
  detail::require_dims(sym.rows() == sym.cols(), "spectral_radius: matrix is not square");
  const std::size_t n = sym.rows();
  if (n == 0) return 0.0;
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    const double nv = norm2(v);
    if (nv == 0.0) return 0.0;
    for (double& x : v) x /= nv;
    Vector w = matvec(sym, v);
    const double next = dot(v, w);
    v = std::move(w);
    if (it > 5 && std::abs(next - lambda) <= 1e-13 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace tadmm
