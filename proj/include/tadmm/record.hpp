#pragma once

// Per-iteration convergence log and its CSV serialization.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "tadmm/data.hpp"
#include "tadmm/error.hpp"

namespace tadmm {

enum class Termination { converged, max_iter, error };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_iter: return "max_iter";
    case Termination::error: return "error";
  }
  return "error";
}

inline constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

struct IterationRow {
  std::size_t k = 0;
  double wall_seconds = 0.0;
  double compute_seconds = 0.0;
  double barrier_wait_seconds = 0.0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double eps_primal = 0.0;
  double eps_dual = 0.0;
  /// ||y^k - y^{k-1}||^2 + ||D x^k - y^k||^2 (unwrapped only).
  double residual_bound_lhs = kNotApplicable;
  /// ||grad F(x^k)||^2 for differentiable problems.
  double grad_norm_sq = kNotApplicable;
  /// Algorithm traffic during this iteration.
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::size_t inner_iterations = 0;
};

struct RunMetadata {
  std::string solver;
  std::string problem;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t nodes = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  Termination status = Termination::error;
  std::size_t iterations = 0;
  double final_objective = kNotApplicable;
  double spectral_radius = kNotApplicable;  // rho(D^T D)
  double lipschitz = kNotApplicable;        // L(grad f)
  double bound_constant = kNotApplicable;   // (L + tau)^2 rho
  std::uint64_t setup_bytes_up = 0;
  double setup_seconds = 0.0;
  double wall_seconds = 0.0;
  double compute_seconds = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::size_t inexact_steps = 0;
  std::vector<std::string> warnings;
};

struct ConvergenceRecord {
  RunMetadata meta;
  std::vector<IterationRow> rows;

  static constexpr const char* kHeader =
      "k,wall_seconds,compute_seconds,barrier_wait_seconds,objective,primal_residual,"
      "dual_residual,eps_primal,eps_dual,residual_bound_lhs,grad_norm_sq,bytes_up,bytes_down,"
      "inner_iterations";
  /// Columns that carry timings and are excluded from determinism checks.
  static constexpr std::size_t kTimingColumns[] = {1, 2, 3};

  std::string to_csv() const;
  std::string metadata_csv() const;
};

namespace detail {

inline std::string format_real(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace detail

inline std::string ConvergenceRecord::to_csv() const {
  using detail::format_real;
  std::string out = kHeader;
  out += "\r\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k) + ',' + format_real(r.wall_seconds) + ',' +
           format_real(r.compute_seconds) + ',' + format_real(r.barrier_wait_seconds) + ',' +
           format_real(r.objective) + ',' + format_real(r.primal_residual) + ',' +
           format_real(r.dual_residual) + ',' + format_real(r.eps_primal) + ',' +
           format_real(r.eps_dual) + ',' + format_real(r.residual_bound_lhs) + ',' +
           format_real(r.grad_norm_sq) + ',' + std::to_string(r.bytes_up) + ',' +
           std::to_string(r.bytes_down) + ',' + std::to_string(r.inner_iterations) + "\r\n";
  }
  return out;
}

inline std::string ConvergenceRecord::metadata_csv() const {
  using detail::csv_field;
  using detail::format_real;
  std::string out = "key,value\r\n";
  auto kv = [&](const std::string& k, const std::string& v) {
    out += csv_field(k) + ',' + csv_field(v) + "\r\n";
  };
  kv("solver", meta.solver);
  kv("problem", meta.problem);
  kv("m", std::to_string(meta.m));
  kv("n", std::to_string(meta.n));
  kv("nodes", std::to_string(meta.nodes));
  kv("tau", format_real(meta.tau));
  kv("seed", std::to_string(meta.seed));
  kv("status", to_string(meta.status));
  kv("iterations", std::to_string(meta.iterations));
  kv("final_objective", format_real(meta.final_objective));
  kv("spectral_radius", format_real(meta.spectral_radius));
  kv("lipschitz", format_real(meta.lipschitz));
  kv("bound_constant", format_real(meta.bound_constant));
  kv("setup_bytes_up", std::to_string(meta.setup_bytes_up));
  kv("setup_seconds", format_real(meta.setup_seconds));
  kv("wall_seconds", format_real(meta.wall_seconds));
  kv("compute_seconds", format_real(meta.compute_seconds));
  kv("bytes_up", std::to_string(meta.bytes_up));
  kv("bytes_down", std::to_string(meta.bytes_down));
  kv("inexact_steps", std::to_string(meta.inexact_steps));
  for (const auto& w : meta.warnings) kv("warning", w);
  return out;
}

/// Writes to a temporary file and renames it into place.
inline void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  detail::write_atomically(path, contents);
}

}  // namespace tadmm
