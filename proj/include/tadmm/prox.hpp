#pragma once

// Coordinate-separable proximal operators
//   prox_f(z, delta) = argmin_y f(y) + 1/(2 delta) ||y - z||^2
// for every loss and penalty the y-updates need.

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"

namespace tadmm {

namespace detail {

inline void check_labels(std::span<const double> labels) {
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] != 1.0 && labels[k] != -1.0)
      throw Error("label at index " + std::to_string(k) + " is " + std::to_string(labels[k]) +
                  ", expected +1 or -1");
}

inline void check_delta(double delta) {
  require(delta > 0.0 && std::isfinite(delta), "prox: delta must be positive and finite");
}

}  // namespace detail

/// 1 / (1 + e^t), evaluated without overflow.
inline double sigmoid_neg(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

/// log(1 + e^{-t}), evaluated without overflow.
inline double logistic_loss(double t) {
  if (t >= 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

// ---------------------------------------------------------------------------
// Scalar kernels

inline double soft_threshold(double z, double thresh) {
  if (z > thresh) return z - thresh;
  if (z < -thresh) return z + thresh;
  return 0.0;
}

inline double prox_hinge_scalar(double z, double label, double delta) {
  return z + label * std::max(std::min(1.0 - label * z, delta), 0.0);
}

/// Logistic prox for label +1: the root of y - z - delta / (1 + e^y) = 0,
/// which lies in [z, z + delta]. Newton with a bisection fallback.
inline double prox_logistic_positive(double z, double delta) {
  double lo = z;
  double hi = z + delta;
  double y = z;
  double prev_h = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double s = sigmoid_neg(y);
    const double h = y - z - delta * s;
    if (std::abs(h) <= 1e-10 * delta) return y;
    // Newton can stall against one end of the bracket for large delta.
    const bool slow = std::abs(h) > 0.5 * prev_h;
    prev_h = std::abs(h);
    if (h > 0.0)
      hi = y;
    else
      lo = y;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(y)))
      return y;
    const double dh = 1.0 + delta * s * (1.0 - s);
    double next = y - h / dh;
    if (slow || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    y = next;
  }
  return y;
}

inline double prox_logistic_scalar(double z, double label, double delta) {
  return label > 0.0 ? prox_logistic_positive(z, delta) : -prox_logistic_positive(-z, delta);
}

// ---------------------------------------------------------------------------
// Vector operators

inline Vector prox_l1(std::span<const double> z, double delta, double mu) {
  detail::check_delta(delta);
  detail::require(mu >= 0.0, "prox_l1: mu must be >= 0");
  Vector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = soft_threshold(z[k], mu * delta);
  return out;
}

inline Vector prox_hinge(std::span<const double> z, std::span<const double> labels, double delta) {
  detail::check_delta(delta);
  detail::require_dims(z.size() == labels.size(), "prox_hinge: label count mismatch");
  detail::check_labels(labels);
  Vector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = prox_hinge_scalar(z[k], labels[k], delta);
  return out;
}

inline Vector prox_logistic(std::span<const double> z, std::span<const double> labels,
                            double delta) {
  detail::check_delta(delta);
  detail::require_dims(z.size() == labels.size(), "prox_logistic: label count mismatch");
  detail::check_labels(labels);
  Vector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = prox_logistic_scalar(z[k], labels[k], delta);
  return out;
}

/// Prox of 1/2 ||y + b||^2.
inline Vector prox_quadratic(std::span<const double> z, std::span<const double> b, double delta) {
  detail::check_delta(delta);
  detail::require_dims(z.size() == b.size(), "prox_quadratic: length mismatch");
  Vector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = (z[k] - delta * b[k]) / (1.0 + delta);
  return out;
}

/// Projection onto the l-infinity ball of radius mu (independent of delta).
inline Vector project_linf(std::span<const double> z, double mu) {
  detail::require(mu >= 0.0, "project_linf: mu must be >= 0");
  Vector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = std::clamp(z[k], -mu, mu);
  return out;
}

// ---------------------------------------------------------------------------
// Lookup table for the logistic prox

/// Precomputed logistic prox values (label +1) on a uniform grid for one
/// fixed delta. Label -1 uses prox(-1, z) = -prox(+1, -z).
class ProxLookupTable {
 public:
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double step() const noexcept { return step_; }
  double delta() const noexcept { return delta_; }
  std::size_t size() const noexcept { return values_.size(); }
  double grid_point(std::size_t i) const { return lo_ + static_cast<double>(i) * step_; }
  double stored(std::size_t i) const { return values_.at(i); }
  /// Largest midpoint interpolation error measured at build time.
  double validated_error() const noexcept { return validated_error_; }

  double eval_positive(double z) const {
    if (!(z >= lo_ && z <= hi_)) return prox_logistic_positive(z, delta_);
    const double pos = (z - lo_) / step_;
    const double r = std::round(pos);
    if (std::abs(pos - r) < 1e-9) return values_[static_cast<std::size_t>(r)];
    auto idx = static_cast<std::size_t>(std::floor(pos));
    if (idx + 1 >= values_.size()) idx = values_.size() - 2;
    const double t = pos - static_cast<double>(idx);
    return values_[idx] + t * (values_[idx + 1] - values_[idx]);
  }

  double eval(double z, double label) const {
    return label > 0.0 ? eval_positive(z) : -eval_positive(-z);
  }

 private:
  friend ProxLookupTable build_lookup(double delta, double lo, double hi, double step);

  double lo_ = 0.0;
  double hi_ = 0.0;
  double step_ = 0.0;
  double delta_ = 0.0;
  double validated_error_ = 0.0;
  Vector values_;
};

inline constexpr double kLookupTolerance = 1e-6;

/// Builds the logistic table on [lo, hi]. The grid is halved (up to eight
/// times) until every midpoint interpolates within kLookupTolerance.
inline ProxLookupTable build_lookup(double delta, double lo = -30.0, double hi = 30.0,
                                    double step = 1e-3) {
  detail::check_delta(delta);
  detail::require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
                  "build_lookup: need finite lo < hi");
  detail::require(step > 0.0 && step <= hi - lo, "build_lookup: invalid grid step");
  for (int refine = 0; refine <= 8; ++refine) {
    ProxLookupTable t;
    t.lo_ = lo;
    t.delta_ = delta;
    const auto intervals = static_cast<std::size_t>(std::ceil((hi - lo) / step - 1e-9));
    t.step_ = (hi - lo) / static_cast<double>(intervals);
    t.hi_ = hi;
    t.values_.resize(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i)
      t.values_[i] = prox_logistic_positive(t.grid_point(i), delta);
    double worst = 0.0;
    for (std::size_t i = 0; i < intervals; ++i) {
      const double mid = t.grid_point(i) + 0.5 * t.step_;
      const double interp = 0.5 * (t.values_[i] + t.values_[i + 1]);
      worst = std::max(worst, std::abs(interp - prox_logistic_positive(mid, delta)));
    }
    t.validated_error_ = worst;
    if (worst <= kLookupTolerance) return t;
    step *= 0.5;
  }
  throw Error("build_lookup: interpolation tolerance not reached");
}

inline double eval_lookup(const ProxLookupTable& table, double z, double label) {
  return table.eval(z, label);
}

// ---------------------------------------------------------------------------
// SeparableProx: one loss/penalty term of a block, with its per-row data

enum class ProxKind { l1, hinge, logistic, quadratic, linf_projection, identity };

inline const char* to_string(ProxKind k) {
  switch (k) {
    case ProxKind::l1: return "l1";
    case ProxKind::hinge: return "hinge";
    case ProxKind::logistic: return "logistic";
    case ProxKind::quadratic: return "quadratic";
    case ProxKind::linf_projection: return "linf_projection";
    case ProxKind::identity: return "identity";
  }
  return "unknown";
}

/// A separable function f(z) = sum_k f_k(z_k):
///   l1:              scale * |z_k|
///   hinge:           scale * max(1 - l_k z_k, 0)
///   logistic:        log(1 + exp(-l_k z_k))
///   quadratic:       1/2 (z_k + b_k)^2
///   linf_projection: indicator of |z_k| <= scale
///   identity:        0
class SeparableProx {
 public:
  static SeparableProx l1(double mu) { return SeparableProx(ProxKind::l1, mu, {}); }
  static SeparableProx hinge(Vector labels, double c) {
    detail::check_labels(labels);
    detail::require(c > 0.0, "hinge: C must be positive");
    return SeparableProx(ProxKind::hinge, c, std::move(labels));
  }
  static SeparableProx logistic(Vector labels) {
    detail::check_labels(labels);
    return SeparableProx(ProxKind::logistic, 1.0, std::move(labels));
  }
  /// 1/2 ||z + offset||^2
  static SeparableProx quadratic(Vector offset) {
    detail::require(all_finite(offset), "quadratic: non-finite offset");
    return SeparableProx(ProxKind::quadratic, 1.0, std::move(offset));
  }
  /// 1/2 ||z - targets||^2
  static SeparableProx least_squares(std::span<const double> targets) {
    return quadratic(scaled(targets, -1.0));
  }
  static SeparableProx linf_ball(double radius) {
    return SeparableProx(ProxKind::linf_projection, radius, {});
  }
  static SeparableProx zero() { return SeparableProx(ProxKind::identity, 0.0, {}); }

  ProxKind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  /// Labels (hinge, logistic) or offsets (quadratic); empty otherwise.
  std::span<const double> data() const noexcept { return data_; }
  bool differentiable() const noexcept {
    return kind_ == ProxKind::logistic || kind_ == ProxKind::quadratic ||
           kind_ == ProxKind::identity;
  }
  /// Lipschitz constant of the gradient, for differentiable kinds.
  double gradient_lipschitz() const {
    switch (kind_) {
      case ProxKind::logistic: return 0.25;
      case ProxKind::quadratic: return 1.0;
      case ProxKind::identity: return 0.0;
      default: throw Error(std::string("gradient_lipschitz: ") + to_string(kind_) +
                           " is not differentiable");
    }
  }

  /// Attaches a lookup table used by logistic evaluations whose delta
  /// matches the table's.
  void set_lookup(std::shared_ptr<const ProxLookupTable> table) { lookup_ = std::move(table); }
  const std::shared_ptr<const ProxLookupTable>& lookup() const noexcept { return lookup_; }

  void prox_into(std::span<const double> z, double delta, std::span<double> out) const {
    detail::check_delta(delta);
    check_length(z.size());
    detail::require_dims(out.size() == z.size(), "prox: output length mismatch");
    switch (kind_) {
      case ProxKind::l1:
        for (std::size_t k = 0; k < z.size(); ++k) out[k] = soft_threshold(z[k], scale_ * delta);
        break;
      case ProxKind::hinge:
        for (std::size_t k = 0; k < z.size(); ++k)
          out[k] = prox_hinge_scalar(z[k], data_[k], scale_ * delta);
        break;
      case ProxKind::logistic:
        if (lookup_ && lookup_->delta() == delta) {
          for (std::size_t k = 0; k < z.size(); ++k) out[k] = lookup_->eval(z[k], data_[k]);
        } else {
          for (std::size_t k = 0; k < z.size(); ++k)
            out[k] = prox_logistic_scalar(z[k], data_[k], delta);
        }
        break;
      case ProxKind::quadratic:
        for (std::size_t k = 0; k < z.size(); ++k)
          out[k] = (z[k] - delta * data_[k]) / (1.0 + delta);
        break;
      case ProxKind::linf_projection:
        for (std::size_t k = 0; k < z.size(); ++k) out[k] = std::clamp(z[k], -scale_, scale_);
        break;
      case ProxKind::identity:
        std::copy(z.begin(), z.end(), out.begin());
        break;
    }
  }

  Vector prox(std::span<const double> z, double delta) const {
    Vector out(z.size());
    prox_into(z, delta, out);
    return out;
  }

  /// f(z). The l-infinity indicator is reported as +inf outside the ball.
  double value(std::span<const double> z) const {
    check_length(z.size());
    double s = 0.0;
    switch (kind_) {
      case ProxKind::l1: return scale_ * norm1(z);
      case ProxKind::hinge:
        for (std::size_t k = 0; k < z.size(); ++k) s += std::max(1.0 - data_[k] * z[k], 0.0);
        return scale_ * s;
      case ProxKind::logistic:
        for (std::size_t k = 0; k < z.size(); ++k) s += logistic_loss(data_[k] * z[k]);
        return s;
      case ProxKind::quadratic:
        for (std::size_t k = 0; k < z.size(); ++k) s += (z[k] + data_[k]) * (z[k] + data_[k]);
        return 0.5 * s;
      case ProxKind::linf_projection:
        return norm_inf(z) <= scale_ ? 0.0 : std::numeric_limits<double>::infinity();
      case ProxKind::identity: return 0.0;
    }
    return s;
  }

  void gradient_into(std::span<const double> z, std::span<double> out) const {
    check_length(z.size());
    detail::require_dims(out.size() == z.size(), "gradient: output length mismatch");
    switch (kind_) {
      case ProxKind::logistic:
        for (std::size_t k = 0; k < z.size(); ++k) out[k] = -data_[k] * sigmoid_neg(data_[k] * z[k]);
        break;
      case ProxKind::quadratic:
        for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] + data_[k];
        break;
      case ProxKind::identity:
        std::fill(out.begin(), out.end(), 0.0);
        break;
      default:
        throw Error(std::string("gradient: ") + to_string(kind_) + " is not differentiable");
    }
  }

  Vector gradient(std::span<const double> z) const {
    Vector out(z.size());
    gradient_into(z, out);
    return out;
  }

 private:
  SeparableProx(ProxKind kind, double scale, Vector data)
      : kind_(kind), scale_(scale), data_(std::move(data)) {
    detail::require(scale_ >= 0.0 && std::isfinite(scale_), "SeparableProx: invalid parameter");
  }

  void check_length(std::size_t n) const {
    if (!data_.empty() || kind_ == ProxKind::hinge || kind_ == ProxKind::logistic ||
        kind_ == ProxKind::quadratic)
      detail::require_dims(n == data_.size(), std::string("prox (") + to_string(kind_) +
                                                  "): input length " + std::to_string(n) +
                                                  " does not match data length " +
                                                  std::to_string(data_.size()));
  }

  ProxKind kind_;
  double scale_;
  Vector data_;
  std::shared_ptr<const ProxLookupTable> lookup_;
};

}  // namespace tadmm
