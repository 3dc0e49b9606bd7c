#pragma once

// Checks the O(1/k) bounds of unwrapped ADMM along an actual run:
//   ||y^{k+1} - y^k||^2 + ||D x^{k+1} - y^{k+1}||^2 <= R / (k + 1)
//   ||D^T grad f(D x^k)||^2 <= (L + tau)^2 rho(D^T D) R / k
// with R = ||y^0 - D x*||^2 + ||lambda^0 - lambda*||^2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tadmm/config.hpp"
#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/problem.hpp"
#include "tadmm/unwrapped.hpp"

namespace tadmm {

inline constexpr double kDefaultSlack = 1.05;

struct RateCheckOptions {
  double slack = kDefaultSlack;
  bool check_gradient = true;
  /// Iterations logged in the checked run.
  std::size_t iterations = 1000;
  /// Reference run that supplies x* and lambda*.
  double reference_eps = 1e-12;
  std::size_t reference_max_iter = 100000;
};

struct RateCheckReport {
  double radius = 0.0;          // R
  double bound_constant = 0.0;  // (L + tau)^2 rho
  double spectral_radius = 0.0;
  double lipschitz = 0.0;
  double tau = 0.0;
  std::size_t iterations = 0;
  bool reference_converged = false;
  double max_residual_ratio = 0.0;
  double max_gradient_ratio = 0.0;
  bool residual_ok = false;
  bool gradient_checked = false;
  bool gradient_ok = false;
  std::vector<double> residual_ratio;  // index k-1 holds the ratio for row k
  std::vector<double> gradient_ratio;

  bool passed() const { return residual_ok && (!gradient_checked || gradient_ok); }
};

inline RateCheckReport ratecheck(const ProblemSpec& problem, const SolverConfig& cfg,
                                 const RateCheckOptions& opt = {}) {
  detail::require(opt.slack > 0.0, "ratecheck: slack must be positive");
  const bool smooth = problem.differentiable();
  if (opt.check_gradient && !smooth)
    throw Error("ratecheck: the gradient bound needs a differentiable loss");
  detail::require(!opt.check_gradient || problem.ridge == 0.0,
                  "ratecheck: the gradient bound assumes no ridge term");

  SolverConfig ref_cfg = cfg;
  ref_cfg.eps_abs = opt.reference_eps;
  ref_cfg.eps_rel = opt.reference_eps;
  ref_cfg.max_iter = opt.reference_max_iter;
  ref_cfg.keep_iterates = false;
  const UnwrappedResult ref = unwrapped_admm(problem, ref_cfg);

  UnwrappedSolver solver(problem, cfg);
  const ProblemSpec& p = solver.problem();
  const double tau = solver.tau();

  RateCheckReport rep;
  rep.tau = tau;
  rep.reference_converged = ref.record.meta.status == Termination::converged;
  rep.spectral_radius = ref.record.meta.spectral_radius;

  // lambda* from the optimality of the y-update: grad f(D x*) = tau lambda*.
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const Vector dx = matvec(p.blocks[i].matrix, ref.x);
    rep.radius += norm_sq(dx);
    if (smooth) {
      const Vector g = p.blocks[i].loss.gradient(dx);
      rep.radius += norm_sq(g) / (tau * tau);
    } else {
      rep.radius += norm_sq(ref.state.lambda[i]);
    }
  }
  if (smooth) {
    rep.lipschitz = ref.record.meta.lipschitz;
    rep.bound_constant = (rep.lipschitz + tau) * (rep.lipschitz + tau) * rep.spectral_radius;
  }
  rep.gradient_checked = opt.check_gradient;

  rep.residual_ok = true;
  rep.gradient_ok = true;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    const IterationRow& row = solver.step();
    const double k = static_cast<double>(row.k);
    // Row k holds ||y^k - y^{k-1}||^2 + ||D x^k - y^k||^2, the bound at index k - 1.
    const double res = row.residual_bound_lhs / (rep.radius / k);
    rep.residual_ratio.push_back(res);
    if (row.k >= 2) {
      rep.max_residual_ratio = std::max(rep.max_residual_ratio, res);
      if (res > opt.slack) rep.residual_ok = false;
    }
    if (opt.check_gradient) {
      const double g = row.grad_norm_sq / (rep.bound_constant * rep.radius / k);
      rep.gradient_ratio.push_back(g);
      rep.max_gradient_ratio = std::max(rep.max_gradient_ratio, g);
      if (g > opt.slack) rep.gradient_ok = false;
    }
    rep.iterations = row.k;
    if (row.residual_bound_lhs == 0.0 && (!opt.check_gradient || row.grad_norm_sq == 0.0)) break;
  }
  return rep;
}

}  // namespace tadmm
