// Acceptance checks. Usage: acceptance --criterion N  (1..10, or 0 for all)

#include <CLI11.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "tadmm/tadmm.hpp"

using namespace tadmm;
using testing_util::to_dense;

namespace {

// Pinned tolerances.
constexpr double kIterateTol = 1e-10;        // 1
constexpr double kExactnessSeconds = 10.0;   // 1
constexpr double kLassoAgreement = 1e-4;     // 2
constexpr double kLassoSeconds = 60.0;       // 2
constexpr double kProxTol = 1e-6;            // 3
constexpr double kProxSeconds = 30.0;        // 3
constexpr double kSvmDualTol = 1e-6;         // 4
constexpr double kSvmStationarityTol = 1e-4; // 4
constexpr double kBoundSlack = 1.05;         // 5, 6
constexpr double kHeteroFactor = 1.5;        // 7
constexpr double kUnwrappedRatioLo = 0.8;    // 7
constexpr double kUnwrappedRatioHi = 1.2;    // 7
constexpr double kHeteroSeconds = 300.0;     // 7
constexpr double kBytesTol = 0.01;           // 8
constexpr double kZeroSolutionTol = 1e-8;    // 9

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  void expect(bool cond, const char* what, const std::string& detail = "") {
    std::printf("  %-4s %s %s\n", cond ? "ok" : "BAD", what, detail.c_str());
    ok = ok && cond;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

SolverConfig family_config(SolverFamily family, ProblemKind kind) {
  SolverConfig cfg;
  apply_default_tau(cfg, family, kind);
  return cfg;
}

// 1 ------------------------------------------------------------------------

bool criterion_exactness() {
  Check c;
  const auto t0 = Clock::now();
  const DenseMatrix d = to_dense(oracle::random_matrix(400, 30, 101));
  const auto b = oracle::random_vector(400, 102);
  auto labels = oracle::random_vector(400, 103);
  for (auto& l : labels) l = l >= 0 ? 1.0 : -1.0;

  for (const ProblemKind kind : {ProblemKind::least_squares, ProblemKind::logistic}) {
    std::vector<std::vector<Vector>> runs;
    for (std::size_t nodes : {1, 2, 4, 8}) {
      SolverConfig cfg;
      cfg.tau = 0.5;
      cfg.max_iter = 200;
      cfg.eps_abs = cfg.eps_rel = 1e-300;
      cfg.keep_iterates = true;
      const auto& t = kind == ProblemKind::logistic ? labels : b;
      const auto shards = partition_rows(d, t, nodes);
      const auto p = kind == ProblemKind::logistic ? make_logistic(shards) : make_least_squares(shards);
      runs.push_back(unwrapped_admm(p, cfg).iterates);
    }
    double worst = 0.0;
    bool same_length = true;
    for (std::size_t r = 1; r < runs.size(); ++r) {
      same_length = same_length && runs[r].size() == runs[0].size();
      for (std::size_t k = 0; k < std::min(runs[r].size(), runs[0].size()); ++k) {
        const double scale = std::max(1.0, norm_inf(runs[0][k]));
        worst = std::max(worst, testing_util::max_abs_diff(runs[r][k], runs[0][k]) / scale);
      }
    }
    c.expect(same_length && !runs[0].empty(), "sequences have equal length");
    c.expect(worst <= kIterateTol, kind == ProblemKind::logistic ? "logistic iterates agree"
                                                                 : "least-squares iterates agree",
             fmt("max diff %.3g", worst));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < kExactnessSeconds, "runtime", fmt("%.2f s", secs));
  return c.ok;
}

// 2 ------------------------------------------------------------------------

bool criterion_lasso_agreement() {
  Check c;
  const auto t0 = Clock::now();
  SyntheticRecipe recipe;
  recipe.kind = RecipeKind::lasso;
  recipe.m = 2000;
  recipe.n = 100;
  recipe.seed = 2;
  const LassoData data = gen_lasso(recipe);
  const auto p = make_lasso(partition_rows(data.matrix, data.targets, 4), data.mu);

  // Reference: forward-backward on the unsharded matrix.
  const DenseMatrix& d = data.matrix;
  const Vector& b = data.targets;
  auto smooth = [&](std::span<const double> x, std::span<double> grad) {
    Vector r = matvec(d, x);
    axpy(-1.0, b, r);
    const Vector g = matvec(d, r, true);
    std::copy(g.begin(), g.end(), grad.begin());
    return 0.5 * norm_sq(r);
  };
  struct {
    double mu;
    Vector prox(std::span<const double> z, double step) const { return prox_l1(z, step, mu); }
    double value(std::span<const double> z) const { return mu * norm1(z); }
  } l1{data.mu};
  FbsOptions fopt;
  fopt.tol = 1e-13;
  fopt.max_iter = 200000;
  const auto ref = fbs_solve(smooth, l1, Vector(100, 0.0), fopt);
  const double f_ref = lasso_objective(d, b, ref.x, data.mu);
  c.expect(ref.converged, "reference converged");

  SolverConfig tight;
  tight.eps_rel = 1e-6;
  tight.eps_abs = 1e-9;
  tight.max_iter = 20000;

  const auto tl = transpose_lasso(p, tight);
  SolverConfig ucfg = tight;
  apply_default_tau(ucfg, SolverFamily::unwrapped, ProblemKind::lasso);
  const auto un = unwrapped_admm(augment_sparse(p, data.mu), ucfg);
  SolverConfig ccfg = tight;
  apply_default_tau(ccfg, SolverFamily::consensus, ProblemKind::lasso);
  const auto co = consensus_admm(p, ccfg);

  const double f_t = lasso_objective(d, b, tl.x, data.mu);
  const double f_u = lasso_objective(d, b, un.x, data.mu);
  const double f_c = lasso_objective(d, b, co.z, data.mu);
  std::printf("  objectives: reference %.12g transpose %.12g unwrapped %.12g consensus %.12g\n",
              f_ref, f_t, f_u, f_c);
  const double vals[] = {f_ref, f_t, f_u, f_c};
  double worst = 0.0;
  for (double a : vals)
    for (double v : vals) worst = std::max(worst, rel(a, v));
  c.expect(worst <= kLassoAgreement, "pairwise relative gap", fmt("%.3g", worst));
  const double secs = seconds_since(t0);
  c.expect(secs < kLassoSeconds, "runtime", fmt("%.2f s", secs));
  return c.ok;
}

// 3 ------------------------------------------------------------------------

/// Minimizer of a convex function on [lo, hi].
template <class F>
double golden_section(F f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
    const double x1 = b - g * (b - a), x2 = a + g * (b - a);
    if (f(x1) <= f(x2))
      b = x2;
    else
      a = x1;
  }
  return 0.5 * (a + b);
}

bool criterion_prox_oracles() {
  Check c;
  const auto t0 = Clock::now();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> uz(-6.0, 6.0), ulog(std::log(0.01), std::log(10.0)),
      umu(0.0, 3.0);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.5);
  constexpr int kSamples = 1000;
  double worst[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < kSamples; ++i) {
    const double z = uz(gen), delta = std::exp(ulog(gen)), l = coin(gen) ? 1.0 : -1.0;
    const double mu = umu(gen), off = nd(gen);
    const double radius = delta * std::max(1.0, mu) + std::abs(z) + std::abs(off) + 1.0;
    const Vector zv{z}, lv{l};

    worst[0] = std::max(worst[0], std::abs(prox_l1(zv, delta, mu)[0] -
                                           oracle::prox_1d([mu](long double y) { return mu * std::fabs(y); },
                                                           z, delta, radius)));
    worst[1] = std::max(
        worst[1], std::abs(prox_hinge(zv, lv, delta)[0] -
                           oracle::prox_1d([l](long double y) { return std::max(1.0L - l * y, 0.0L); },
                                           z, delta, radius)));
    worst[2] = std::max(worst[2], std::abs(prox_logistic(zv, lv, delta)[0] -
                                           oracle::prox_1d(
                                               [l](long double y) { return oracle::logistic_ld(l * y); },
                                               z, delta, radius)));
    worst[3] = std::max(worst[3],
                        std::abs(prox_quadratic(zv, Vector{off}, delta)[0] -
                                 oracle::prox_1d([off](long double y) { return 0.5L * (y + off) * (y + off); },
                                                 z, delta, radius)));
    const double box = std::max(mu, 1e-3);
    const double proj = golden_section([z](double y) { return (y - z) * (y - z); }, -box, box);
    worst[4] = std::max(worst[4], std::abs(project_linf(zv, box)[0] - proj));
  }
  const char* names[] = {"l1", "hinge", "logistic", "quadratic", "linf projection"};
  for (int k = 0; k < 5; ++k) c.expect(worst[k] <= kProxTol, names[k], fmt("max err %.3g", worst[k]));
  const double secs = seconds_since(t0);
  c.expect(secs < kProxSeconds, "runtime", fmt("%.2f s", secs));
  return c.ok;
}

// 4 ------------------------------------------------------------------------

bool criterion_svm_dual() {
  Check c;
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<std::size_t> um(5, 50), un(1, 8);
  std::uniform_real_distribution<double> uc(0.1, 5.0), utau(0.05, 3.0);
  std::bernoulli_distribution coin(0.5);
  double worst_dual = 0.0, worst_stat = 0.0, worst_comp = 0.0;
  for (unsigned inst = 0; inst < 20; ++inst) {
    const std::size_t m = um(gen), n = un(gen);
    const auto rows = oracle::random_matrix(m, n, 400 + inst);
    Vector labels(m);
    for (auto& l : labels) l = coin(gen) ? 1.0 : -1.0;
    const auto z = oracle::random_vector(n, 500 + inst);
    const double cw = uc(gen), tau = utau(gen);
    const DenseMatrix a = to_dense(rows);
    SvmOptions opt;
    opt.tol = 1e-12;
    opt.max_passes = 100000;
    const auto res = svm_dual_cd(a, labels, cw, tau, z, nullptr, opt);
    const Vector p = svm_dual_linear_term(a, labels, tau, z);
    const auto alpha = oracle::svm_dual_pg(rows, labels, p, cw, 1000000);
    const double want = oracle::svm_dual_value(rows, labels, p, alpha);
    worst_dual = std::max(worst_dual, std::abs(res.dual_objective - want) / std::max(1.0, std::abs(want)));

    // Stationarity of w for tau/2 ||w - z||^2 + 1/2 ||w||^2 + C sum hinge:
    // (1 + tau) w - tau z - A^T L alpha = 0 with alpha in [0, C] matching the margins.
    Vector la(m);
    for (std::size_t k = 0; k < m; ++k) la[k] = labels[k] * res.state.alpha[k];
    Vector r = scaled(res.w, 1.0 + tau);
    axpy(-tau, z, r);
    axpy(-1.0, matvec(a, la, true), r);
    for (std::size_t k = 0; k < m; ++k) {
      const double margin = labels[k] * dot(a.row(k), res.w);
      const double theta = res.state.alpha[k] / cw;
      worst_comp = std::max(worst_comp, theta * std::max(margin - 1.0, 0.0) +
                                            (1.0 - theta) * std::max(1.0 - margin, 0.0));
    }
    worst_stat = std::max(worst_stat, norm_inf(r));
  }
  c.expect(worst_dual <= kSvmDualTol, "dual objective vs projected gradient", fmt("%.3g", worst_dual));
  c.expect(worst_stat <= kSvmStationarityTol, "primal stationarity", fmt("%.3g", worst_stat));
  c.expect(worst_comp <= kSvmStationarityTol, "margin complementarity", fmt("%.3g", worst_comp));
  return c.ok;
}

// 5, 6 ---------------------------------------------------------------------

struct BoundInstance {
  const char* name;
  ProblemSpec problem;
  double lipschitz;
};

std::vector<BoundInstance> bound_instances() {
  SyntheticRecipe r;
  r.m = 500;
  r.n = 20;
  r.seed = 5;
  r.kind = RecipeKind::lasso;
  const auto ls = gen_lasso(r);
  r.kind = RecipeKind::classification;
  const auto cl = gen_classification(r);
  return {{"least-squares", make_least_squares(partition_rows(ls.matrix, ls.targets, 4)), 1.0},
          {"logistic", make_logistic(partition_rows(cl.matrix, cl.labels, 4)), 0.25}};
}

bool criterion_bound(bool gradient) {
  Check c;
  for (const auto& inst : bound_instances()) {
    RateCheckOptions opt;
    opt.slack = kBoundSlack;
    opt.check_gradient = gradient;
    opt.iterations = 1000;
    const auto rep = ratecheck(inst.problem, family_config(SolverFamily::unwrapped, inst.problem.kind), opt);
    c.expect(rep.reference_converged, "reference run converged", inst.name);
    if (gradient) {
      c.expect(rep.lipschitz == inst.lipschitz, "Lipschitz constant", fmt("L=%g", rep.lipschitz));
      const double want_c = (rep.lipschitz + rep.tau) * (rep.lipschitz + rep.tau) * rep.spectral_radius;
      c.expect(rel(rep.bound_constant, want_c) < 1e-12, "bound constant", fmt("C=%.6g", rep.bound_constant));
      c.expect(rep.gradient_ok, inst.name, fmt("max gradient ratio %.4g", rep.max_gradient_ratio));
    } else {
      c.expect(rep.residual_ok, inst.name, fmt("max residual ratio %.4g", rep.max_residual_ratio));
    }
  }
  return c.ok;
}

// 7 ------------------------------------------------------------------------

bool criterion_heterogeneity() {
  Check c;
  const auto t0 = Clock::now();
  constexpr std::size_t kNodes = 8, kPerNode = 500, kCols = 50;
  constexpr std::uint64_t kSeed = 7;
  SyntheticRecipe r;
  r.kind = RecipeKind::classification;
  r.m = kNodes * kPerNode;
  r.n = kCols;
  r.seed = kSeed;
  const auto data = gen_classification(r);
  const auto homo_shards = partition_rows(data.matrix, data.labels, kNodes);
  auto hetero_shards = homo_shards;
  std::vector<DenseMatrix> mats;
  for (const auto& s : hetero_shards) mats.push_back(s.matrix);
  heterogenize(std::span<DenseMatrix>(mats), kSeed);
  for (std::size_t i = 0; i < kNodes; ++i) hetero_shards[i].matrix = mats[i];

  const auto homo = make_logistic(homo_shards), hetero = make_logistic(hetero_shards);
  const auto ccfg = family_config(SolverFamily::consensus, ProblemKind::logistic);
  const auto ucfg = family_config(SolverFamily::unwrapped, ProblemKind::logistic);
  const auto c_homo = consensus_admm(homo, ccfg).record.meta;
  const auto c_het = consensus_admm(hetero, ccfg).record.meta;
  const auto u_homo = unwrapped_admm(homo, ucfg).record.meta;
  const auto u_het = unwrapped_admm(hetero, ucfg).record.meta;
  std::printf("  consensus iterations %zu -> %zu, unwrapped iterations %zu -> %zu\n",
              c_homo.iterations, c_het.iterations, u_homo.iterations, u_het.iterations);
  c.expect(c_homo.status == Termination::converged && c_het.status == Termination::converged &&
               u_homo.status == Termination::converged && u_het.status == Termination::converged,
           "all runs converged");
  const double c_ratio = static_cast<double>(c_het.iterations) / static_cast<double>(c_homo.iterations);
  const double u_ratio = static_cast<double>(u_het.iterations) / static_cast<double>(u_homo.iterations);
  c.expect(c_ratio >= kHeteroFactor, "consensus slows down", fmt("ratio %.3g", c_ratio));
  c.expect(u_ratio >= kUnwrappedRatioLo && u_ratio <= kUnwrappedRatioHi, "unwrapped unaffected",
           fmt("ratio %.3g", u_ratio));
  const double secs = seconds_since(t0);
  c.expect(secs < kHeteroSeconds, "runtime", fmt("%.2f s", secs));
  return c.ok;
}

// 8 ------------------------------------------------------------------------

bool criterion_communication() {
  Check c;
  constexpr std::size_t kNodes = 4, kRows = 2000, kCols = 100;
  SyntheticRecipe r;
  r.kind = RecipeKind::lasso;
  r.m = kRows;
  r.n = kCols;
  r.seed = 8;
  const auto data = gen_lasso(r);
  const auto lasso = make_lasso(partition_rows(data.matrix, data.targets, kNodes), data.mu);
  const auto ls = make_least_squares(partition_rows(data.matrix, data.targets, kNodes));

  const auto tl = transpose_lasso(lasso, SolverConfig{});
  bool zero_after_setup = tl.record.meta.bytes_up == tl.record.meta.setup_bytes_up &&
                          tl.record.meta.bytes_down == 0;
  for (const auto& row : tl.record.rows) zero_after_setup = zero_after_setup && row.bytes_up == 0 && row.bytes_down == 0;
  c.expect(zero_after_setup, "transpose lasso sends nothing after setup");

  auto per_iteration_up = [](const ConvergenceRecord& rec) {
    double worst = 0.0;
    for (const auto& row : rec.rows) worst = std::max(worst, static_cast<double>(row.bytes_up));
    return worst;
  };
  SolverConfig fixed;
  fixed.max_iter = 20;
  fixed.eps_abs = fixed.eps_rel = 1e-15;
  const double unwrapped_up = per_iteration_up(unwrapped_admm(ls, fixed).record);
  const double consensus_up = per_iteration_up(consensus_admm(ls, fixed).record);
  const double want_unwrapped = 8.0 * kRows;
  const double want_consensus = 8.0 * kCols * kNodes;
  c.expect(rel(unwrapped_up, want_unwrapped) <= kBytesTol, "unwrapped upstream bytes per iteration vs 8 m",
           fmt("measured %.0f", unwrapped_up) + fmt(" expected %.0f", want_unwrapped) +
               fmt(" (8 n N = %.0f)", 8.0 * kCols * kNodes));
  c.expect(rel(consensus_up, want_consensus) <= kBytesTol, "consensus upstream bytes per iteration vs 8 n N",
           fmt("measured %.0f", consensus_up) + fmt(" expected %.0f", want_consensus));
  return c.ok;
}

// 9 ------------------------------------------------------------------------

bool criterion_zero_solution() {
  Check c;
  for (const auto& [m, n, seed] : {std::tuple<std::size_t, std::size_t, std::uint64_t>{500, 40, 9},
                                   {2000, 100, 10}, {300, 300, 11}}) {
    SyntheticRecipe r;
    r.kind = RecipeKind::lasso;
    r.m = m;
    r.n = n;
    r.seed = seed;
    const auto data = gen_lasso(r);
    const double lam = lasso_lambda_max(data.matrix, data.targets);
    c.expect(rel(10.0 * data.mu, lam) < 1e-12, "10 mu equals the zero-solution threshold");
    const auto p = make_lasso(partition_rows(data.matrix, data.targets, 4), 10.0 * data.mu);
    const auto res = transpose_lasso(p, SolverConfig{});
    c.expect(norm_inf(res.x) <= kZeroSolutionTol, "solution is zero",
             fmt("m=%g", static_cast<double>(m)) + fmt(" max|x|=%.3g", norm_inf(res.x)));
  }
  return c.ok;
}

// 10 -----------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_timing(const std::string& csv) {
  std::stringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string f;
    for (std::size_t col = 0; std::getline(ls, f, ','); ++col) {
      bool timing = false;
      for (std::size_t t : ConvergenceRecord::kTimingColumns) timing = timing || t == col;
      out += (timing ? std::string() : f) + ',';
    }
    out += '\n';
  }
  return out;
}

bool criterion_determinism() {
  Check c;
  const auto dir = std::filesystem::temp_directory_path() / "tadmm_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const char* flag_sets[] = {
      "--problem lasso --method transpose --m 1000 --n 50 --nodes 4 --seed 7",
      "--problem lasso --method consensus --m 1000 --n 50 --nodes 4 --seed 7",
      "--problem logistic --method transpose --per-node 300 --n 20 --nodes 5 --seed 3 --hetero",
      "--problem logistic --method consensus --per-node 300 --n 20 --nodes 5 --seed 3 --hetero",
      "--problem svm --method transpose --m 600 --n 10 --nodes 3 --seed 4",
      "--problem sparse-logistic --m 600 --n 20 --nodes 3 --seed 5",
      "--problem dual-lasso --m 100 --n 200 --nodes 4 --seed 6",
  };
  for (const char* flags : flag_sets) {
    std::string csv[2];
    bool ran = true;
    for (int rep = 0; rep < 2; ++rep) {
      const auto out = dir / ("run" + std::to_string(rep) + ".csv");
      const std::string cmd = std::string(TADMM_CLI_PATH) + " solve " + flags + " --out " + out.string() +
                              " > /dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      ran = ran && WIFEXITED(status) && (WEXITSTATUS(status) == 0 || WEXITSTATUS(status) == 2);
      csv[rep] = strip_timing(slurp(out));
    }
    c.expect(ran && !csv[0].empty() && csv[0] == csv[1], flags);
  }
  std::filesystem::remove_all(dir);
  return c.ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int which = 0;
  app.add_option("--criterion", which, "Criterion number, 0 for all")->check(CLI::Range(0, 10));
  CLI11_PARSE(app, argc, argv);

  struct Entry {
    const char* name;
    bool (*run)();
  };
  const Entry entries[] = {
      {"transpose-reduction exactness", criterion_exactness},
      {"lasso cross-solver agreement", criterion_lasso_agreement},
      {"prox oracle suite", criterion_prox_oracles},
      {"svm dual sub-solver", criterion_svm_dual},
      {"residual rate bound", [] { return criterion_bound(false); }},
      {"gradient rate bound", [] { return criterion_bound(true); }},
      {"heterogeneity trend", criterion_heterogeneity},
      {"communication accounting", criterion_communication},
      {"zero-solution penalty", criterion_zero_solution},
      {"determinism", criterion_determinism},
  };
  bool all = true;
  for (int k = 1; k <= 10; ++k) {
    if (which != 0 && which != k) continue;
    std::printf("criterion %d (%s)\n", k, entries[k - 1].name);
    std::fflush(stdout);
    bool ok = false;
    try {
      ok = entries[k - 1].run();
    } catch (const std::exception& e) {
      std::printf("  error: %s\n", e.what());
    }
    std::printf("%s criterion %d\n", ok ? "PASS" : "FAIL", k);
    std::fflush(stdout);
    all = all && ok;
  }
  return all ? 0 : 1;
}
