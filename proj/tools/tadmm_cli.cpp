// tadmm: generate data, run the solvers, compare them, check the rate bounds.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "tadmm/tadmm.hpp"

namespace {

using namespace tadmm;

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitMaxIter = 2;
constexpr int kExitUsage = 64;

struct Options {
  std::string problem;
  std::string method = "transpose";
  std::size_t m = 1000;
  std::size_t n = 50;
  std::size_t nodes = 4;
  std::optional<std::size_t> per_node;
  std::optional<double> tau;
  std::optional<double> tau_ref;
  std::optional<double> mu;
  double c = 1.0;
  double eps_rel = 1e-3;
  double eps_abs = 1e-6;
  std::size_t max_iter = 5000;
  std::uint64_t seed = 0;
  bool hetero = false;
  bool lookup = false;
  std::string data;
  std::string out;
  // generate
  std::string format = "binary";
  // ratecheck
  double slack = kDefaultSlack;
  std::size_t iterations = 1000;
  bool no_gradient = false;
};

void add_problem_flags(CLI::App& cmd, Options& o, bool with_method) {
  cmd.add_option("--problem", o.problem, "Problem kind")
      ->required()
      ->check(CLI::IsMember({"lasso", "logistic", "svm", "sparse-logistic", "dual-lasso",
                             "least-squares"}));
  if (with_method)
    cmd.add_option("--method", o.method, "Solver family")
        ->check(CLI::IsMember({"transpose", "consensus"}));
  auto* m = cmd.add_option("--m", o.m, "Total rows")->check(CLI::PositiveNumber);
  cmd.add_option("--per-node", o.per_node, "Rows per node")->check(CLI::PositiveNumber)->excludes(m);
  cmd.add_option("--n", o.n, "Columns")->check(CLI::PositiveNumber);
  cmd.add_option("--nodes", o.nodes, "Worker count")->check(CLI::PositiveNumber);
  cmd.add_option("--mu", o.mu, "l1 weight (default: 10% of the zero-solution threshold)")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--C", o.c, "Hinge weight")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", o.seed, "Data and run seed");
  cmd.add_flag("--hetero", o.hetero, "Add a per-node offset to every shard entry");
  cmd.add_option("--data", o.data, "Dataset file instead of synthetic data");
}

void add_solver_flags(CLI::App& cmd, Options& o) {
  auto* tau = cmd.add_option("--tau", o.tau, "Fixed stepsize")->check(CLI::PositiveNumber);
  cmd.add_option("--tau-ref", o.tau_ref, "Stepsize at 10000 rows, scaled with m")
      ->check(CLI::PositiveNumber)
      ->excludes(tau);
  cmd.add_option("--eps-rel", o.eps_rel, "Relative tolerance")->check(CLI::PositiveNumber);
  cmd.add_option("--eps-abs", o.eps_abs, "Absolute tolerance")->check(CLI::PositiveNumber);
  cmd.add_option("--max-iter", o.max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  cmd.add_flag("--lookup", o.lookup, "Tabulated logistic prox");
}

bool is_classification(ProblemKind k) {
  return k == ProblemKind::logistic || k == ProblemKind::svm || k == ProblemKind::sparse_logistic;
}

Dataset make_dataset(const Options& o, ProblemKind kind) {
  if (!o.data.empty()) {
    Dataset ds = load_dataset(o.data);
    if (ds.kind == TargetKind::none) throw Error("dataset has no targets");
    if (is_classification(kind) && ds.kind != TargetKind::labels)
      throw Error(std::string(to_string(kind)) + " needs a labelled dataset");
    return ds;
  }
  SyntheticRecipe r;
  r.m = o.per_node ? *o.per_node * o.nodes : o.m;
  r.n = o.n;
  r.seed = o.seed;
  Dataset ds;
  if (is_classification(kind)) {
    r.kind = RecipeKind::classification;
    auto c = gen_classification(r);
    ds.matrix = std::move(c.matrix);
    ds.targets = std::move(c.labels);
    ds.kind = TargetKind::labels;
  } else {
    r.kind = RecipeKind::lasso;
    r.sparsity = std::min(r.sparsity, r.n);
    auto l = gen_lasso(r);
    ds.matrix = std::move(l.matrix);
    ds.targets = std::move(l.targets);
    ds.kind = TargetKind::real;
  }
  return ds;
}

DenseMatrix stack_shards(const std::vector<RowShard>& shards) {
  std::vector<DenseMatrix> mats;
  for (const auto& s : shards) mats.push_back(s.matrix);
  return vstack(std::span<const DenseMatrix>(mats));
}

struct Instance {
  ProblemKind kind;
  ProblemSpec spec;
  std::size_t m = 0;
  std::size_t n = 0;
};

Instance build_instance(const Options& o) {
  Instance inst;
  inst.kind = parse_problem_kind(o.problem);
  const Dataset ds = make_dataset(o, inst.kind);
  inst.m = ds.matrix.rows();
  inst.n = ds.matrix.cols();

  if (inst.kind == ProblemKind::dual_lasso) {
    auto cols = partition_cols(ds.matrix, o.nodes);
    if (o.hetero) heterogenize(std::span<DenseMatrix>(cols), o.seed);
    const DenseMatrix solved = hstack(std::span<const DenseMatrix>(cols));
    const double mu =
        o.mu ? *o.mu : kPenaltyFraction * lasso_lambda_max(solved, ds.targets);
    inst.spec = dualize_columns(make_column_lasso(std::move(cols), ds.targets, mu));
    return inst;
  }

  auto shards = partition_rows(ds.matrix, ds.targets, o.nodes);
  if (o.hetero) {
    std::vector<DenseMatrix> mats;
    for (auto& s : shards) mats.push_back(std::move(s.matrix));
    heterogenize(std::span<DenseMatrix>(mats), o.seed);
    for (std::size_t i = 0; i < shards.size(); ++i) shards[i].matrix = std::move(mats[i]);
  }
  auto penalty = [&](double (*lambda_max)(const DenseMatrix&, std::span<const double>)) {
    return o.mu ? *o.mu : kPenaltyFraction * lambda_max(stack_shards(shards), ds.targets);
  };
  switch (inst.kind) {
    case ProblemKind::least_squares: inst.spec = make_least_squares(shards); break;
    case ProblemKind::logistic: inst.spec = make_logistic(shards); break;
    case ProblemKind::svm: inst.spec = make_svm(shards, o.c); break;
    case ProblemKind::lasso: inst.spec = make_lasso(shards, penalty(lasso_lambda_max)); break;
    case ProblemKind::sparse_logistic:
      inst.spec = make_sparse_logistic(shards, penalty(logistic_lambda_max));
      break;
    case ProblemKind::dual_lasso: break;
  }
  return inst;
}

SolverConfig solver_config(const Options& o, SolverFamily family, ProblemKind kind) {
  SolverConfig cfg;
  cfg.eps_rel = o.eps_rel;
  cfg.eps_abs = o.eps_abs;
  cfg.max_iter = o.max_iter;
  cfg.seed = o.seed;
  cfg.use_lookup = o.lookup;
  if (o.tau) {
    cfg.tau = *o.tau;
  } else if (o.tau_ref) {
    cfg.tau_ref = *o.tau_ref;
  } else {
    apply_default_tau(cfg, family, kind);
  }
  return cfg;
}

/// Runs one solver family on the instance. Lasso on the transpose path
/// uses the one-shot Gram reduction.
ConvergenceRecord run_method(const Instance& inst, const Options& o, const std::string& method) {
  if (method == "consensus") {
    if (inst.kind == ProblemKind::dual_lasso)
      throw Error("dual-lasso needs column sharding, which consensus does not support");
    return consensus_admm(inst.spec, solver_config(o, SolverFamily::consensus, inst.kind)).record;
  }
  const SolverConfig cfg = solver_config(o, SolverFamily::unwrapped, inst.kind);
  if (inst.kind == ProblemKind::lasso) return transpose_lasso(inst.spec, cfg).record;
  return unwrapped_admm(inst.spec, cfg).record;
}

void write_record(const ConvergenceRecord& rec, const std::string& out) {
  if (out.empty()) return;
  write_text_file(out, rec.to_csv());
  write_text_file(out + ".meta.csv", rec.metadata_csv());
}

int exit_code(Termination t) {
  switch (t) {
    case Termination::converged: return kExitConverged;
    case Termination::max_iter: return kExitMaxIter;
    case Termination::error: return kExitError;
  }
  return kExitError;
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int cmd_solve(const Options& o) {
  const Instance inst = build_instance(o);
  const ConvergenceRecord rec = run_method(inst, o, o.method);
  write_record(rec, o.out);
  std::cout << "solver=" << rec.meta.solver << " problem=" << rec.meta.problem
            << " status=" << to_string(rec.meta.status) << " iterations=" << rec.meta.iterations
            << " objective=" << real(rec.meta.final_objective) << '\n';
  return exit_code(rec.meta.status);
}

int cmd_compare(const Options& o) {
  const Instance inst = build_instance(o);
  std::string csv =
      "method,solver,problem,m,n,nodes,hetero,status,iterations,wall_seconds,compute_seconds,"
      "final_objective,setup_bytes_up,bytes_up,bytes_down,bytes_up_per_iteration\r\n";
  int code = kExitConverged;
  for (const std::string method : {"transpose", "consensus"}) {
    const ConvergenceRecord rec = run_method(inst, o, method);
    const auto& mt = rec.meta;
    const std::uint64_t loop_up = mt.bytes_up - mt.setup_bytes_up;
    const double per_iter = mt.iterations ? static_cast<double>(loop_up) / mt.iterations : 0.0;
    csv += method + ',' + mt.solver + ',' + mt.problem + ',' + std::to_string(mt.m) + ',' +
           std::to_string(mt.n) + ',' + std::to_string(mt.nodes) + ',' + (o.hetero ? "1" : "0") +
           ',' + to_string(mt.status) + ',' + std::to_string(mt.iterations) + ',' +
           detail::format_real(mt.wall_seconds) + ',' + detail::format_real(mt.compute_seconds) +
           ',' + detail::format_real(mt.final_objective) + ',' +
           std::to_string(mt.setup_bytes_up) + ',' + std::to_string(mt.bytes_up) + ',' +
           std::to_string(mt.bytes_down) + ',' + detail::format_real(per_iter) + "\r\n";
    code = std::max(code, exit_code(mt.status));
  }
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_text_file(o.out, csv);
  }
  return code;
}

int cmd_ratecheck(const Options& o) {
  const Instance inst = build_instance(o);
  RateCheckOptions opt;
  opt.slack = o.slack;
  opt.iterations = o.iterations;
  opt.check_gradient = !o.no_gradient;
  const RateCheckReport rep =
      ratecheck(inst.spec, solver_config(o, SolverFamily::unwrapped, inst.kind), opt);
  if (!o.out.empty()) {
    std::string csv = "k,residual_ratio,gradient_ratio\r\n";
    for (std::size_t i = 0; i < rep.residual_ratio.size(); ++i)
      csv += std::to_string(i + 1) + ',' + detail::format_real(rep.residual_ratio[i]) + ',' +
             (i < rep.gradient_ratio.size() ? detail::format_real(rep.gradient_ratio[i]) : "") +
             "\r\n";
    write_text_file(o.out, csv);
  }
  std::cout << "residual " << (rep.residual_ok ? "PASS" : "FAIL")
            << " max_ratio=" << real(rep.max_residual_ratio) << '\n';
  if (rep.gradient_checked)
    std::cout << "gradient " << (rep.gradient_ok ? "PASS" : "FAIL")
              << " max_ratio=" << real(rep.max_gradient_ratio)
              << " L=" << real(rep.lipschitz) << " rho=" << real(rep.spectral_radius)
              << " C=" << real(rep.bound_constant) << '\n';
  std::cout << "iterations=" << rep.iterations << " tau=" << real(rep.tau)
            << " R=" << real(rep.radius) << '\n';
  if (!rep.reference_converged) std::cerr << "warning: reference run hit its iteration cap\n";
  return rep.passed() ? kExitConverged : kExitError;
}

int cmd_generate(const Options& o) {
  const ProblemKind kind = parse_problem_kind(o.problem);
  Dataset ds = make_dataset(o, kind);
  if (o.hetero) {
    auto shards = partition_rows(ds.matrix, {}, o.nodes);
    std::vector<DenseMatrix> mats;
    for (auto& s : shards) mats.push_back(std::move(s.matrix));
    heterogenize(std::span<DenseMatrix>(mats), o.seed);
    ds.matrix = vstack(std::span<const DenseMatrix>(mats));
  }
  save_dataset(o.out, ds.matrix, ds.targets, ds.kind,
               o.format == "text" ? FileFormat::text : FileFormat::binary);
  std::cout << "wrote " << ds.matrix.rows() << "x" << ds.matrix.cols() << " "
            << to_string(ds.kind) << " dataset to " << o.out << '\n';
  return kExitConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed convex model fitting on a simulated cluster"};
  app.require_subcommand(1);
  Options o;

  auto* solve = app.add_subcommand("solve", "Run one solver and write its convergence record");
  add_problem_flags(*solve, o, true);
  add_solver_flags(*solve, o);
  solve->add_option("--out", o.out, "Record CSV (metadata goes to <out>.meta.csv)");

  auto* compare = app.add_subcommand("compare", "Run both solver families on the same data");
  add_problem_flags(*compare, o, false);
  add_solver_flags(*compare, o);
  compare->add_option("--out", o.out, "Comparison CSV (default: standard output)");

  auto* rate = app.add_subcommand("ratecheck", "Check the O(1/k) bounds along a run");
  add_problem_flags(*rate, o, false);
  add_solver_flags(*rate, o);
  rate->add_option("--slack", o.slack, "Allowed ratio to the bound")->check(CLI::PositiveNumber);
  rate->add_option("--iterations", o.iterations, "Checked iterations")->check(CLI::PositiveNumber);
  rate->add_flag("--no-gradient", o.no_gradient, "Check only the residual bound");
  rate->add_option("--out", o.out, "Per-iteration ratio CSV");

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  add_problem_flags(*gen, o, false);
  gen->add_option("--format", o.format, "File format")->check(CLI::IsMember({"binary", "text"}));
  gen->add_option("--out", o.out, "Dataset path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*solve) return cmd_solve(o);
    if (*compare) return cmd_compare(o);
    if (*rate) return cmd_ratecheck(o);
    return cmd_generate(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
