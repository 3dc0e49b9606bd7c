#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "tadmm/cluster.hpp"
#include "tadmm/error.hpp"
#include "tadmm/problem.hpp"

namespace tadmm {

/// Size at which per-loss reference stepsizes are tuned.
inline constexpr double kReferenceRows = 10000.0;

struct SolverConfig {
  double tau = 1.0;
  /// When set, tau = tau_ref * m / m_ref.
  std::optional<double> tau_ref;
  double m_ref = kReferenceRows;
  double eps_rel = 1e-3;
  double eps_abs = 1e-6;
  std::size_t max_iter = 5000;
  std::uint64_t seed = 0;
  bool use_lookup = false;
  std::size_t lanes = default_lanes();
  /// Keep x^k for every k in the result.
  bool keep_iterates = false;
  /// Sub-problem tolerance and iteration cap for consensus nodes.
  double inner_tol = 1e-8;
  std::size_t inner_max_iter = 200;
  /// Forward-backward settings for the single-node lasso solve.
  double fbs_tol = 1e-12;
  std::size_t fbs_max_iter = 200000;
};

inline void validate(const SolverConfig& cfg) {
  detail::require(cfg.tau > 0.0, "solver config: tau must be positive");
  detail::require(!cfg.tau_ref || *cfg.tau_ref > 0.0, "solver config: tau_ref must be positive");
  detail::require(cfg.m_ref > 0.0, "solver config: m_ref must be positive");
  detail::require(cfg.eps_rel > 0.0 && cfg.eps_abs > 0.0,
                  "solver config: tolerances must be positive");
  detail::require(cfg.max_iter >= 1, "solver config: max_iter must be >= 1");
}

inline double effective_tau(const SolverConfig& cfg, std::size_t m) {
  validate(cfg);
  if (cfg.tau_ref) return *cfg.tau_ref * static_cast<double>(m) / cfg.m_ref;
  return cfg.tau;
}

enum class SolverFamily { unwrapped, consensus };

/// Default stepsize. Proportional entries are tau_0 at kReferenceRows and
/// scale with m; the others are used as is.
struct TauDefault {
  double tau;
  bool proportional;
};

inline TauDefault default_tau(SolverFamily family, ProblemKind kind) {
  if (family == SolverFamily::unwrapped) {
    switch (kind) {
      case ProblemKind::least_squares: return {5.0, true};
      case ProblemKind::logistic: return {0.25, true};
      case ProblemKind::svm: return {0.05, false};
      case ProblemKind::lasso: return {50.0, false};
      case ProblemKind::sparse_logistic: return {10.0, false};
      case ProblemKind::dual_lasso: return {0.1, false};
    }
  } else {
    switch (kind) {
      case ProblemKind::least_squares: return {500.0, true};
      case ProblemKind::logistic: return {100.0, true};
      case ProblemKind::svm: return {250.0, true};
      case ProblemKind::lasso: return {500.0, true};
      case ProblemKind::sparse_logistic: return {250.0, true};
      case ProblemKind::dual_lasso: break;
    }
  }
  return {1.0, false};
}

/// Fills in the default stepsize for a problem.
inline void apply_default_tau(SolverConfig& cfg, SolverFamily family, ProblemKind kind) {
  const TauDefault d = default_tau(family, kind);
  if (d.proportional) {
    cfg.tau_ref = d.tau;
  } else {
    cfg.tau = d.tau;
    cfg.tau_ref.reset();
  }
}

}  // namespace tadmm
