#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ebsde/config.hpp"
#include "ebsde/csv.hpp"
#include "ebsde/drivers.hpp"
#include "ebsde/ergodic_cost.hpp"
#include "ebsde/metrics.hpp"
#include "ebsde/nn.hpp"
#include "ebsde/oracles.hpp"
#include "ebsde/sde.hpp"
#include "ebsde/solvers.hpp"
#include "ebsde/utilities.hpp"

namespace ebsde {

/// Everything a subcommand needs besides the config.
struct RunContext {
  std::filesystem::path out_dir = "out";
  std::size_t threads = 1;
  bool dry_run = false;
  std::optional<std::filesystem::path> checkpoint;
  std::ostream* log = &std::cerr;

  std::filesystem::path checkpoint_path() const { return checkpoint ? *checkpoint : out_dir / "checkpoint.txt"; }
};

// Seeds of the independent pieces of a run, all derived from train.seed.
namespace seeds {
inline constexpr std::uint64_t kSimulate = 3;
inline constexpr std::uint64_t kEstimate = 4;
inline constexpr std::uint64_t kEvaluate = 5;
inline constexpr std::uint64_t kRegression = 6;
inline constexpr std::uint64_t kUtility = 7;
inline constexpr std::uint64_t kTable = 8;
}  // namespace seeds

namespace detail {

inline double quantile_sorted(const std::vector<double>& xs, double q) {
  if (xs.empty()) return 0.0;
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline void announce(const RunContext& ctx, const std::string& what) {
  if (ctx.log) *ctx.log << what << "\n";
}

inline LambdaExperiment lambda_experiment(const Config& c, std::size_t threads) {
  LambdaExperiment ex;
  ex.model = build_model(c);
  ex.grid = build_grid(c);
  ex.driver = resolve_driver(c, ex.model);
  ex.method = build_method(c);
  if (auto o = build_oracle(c, ex.model, ex.driver)) ex.exact = o->lambda;
  ex.K = resolve_K(c, ex.driver);
  ex.y0 = resolve_y0(c, ex.model, ex.driver);
  ex.threads = threads;
  return ex;
}

/// lambda_hat for the regression scheme: explicit, else the oracle value,
/// else the configured Monte Carlo estimator.
inline double resolve_lambda_hat(const Config& c, std::size_t threads) {
  if (auto l = c.real_or_auto("train.lambda_hat")) return *l;
  LambdaExperiment ex = lambda_experiment(c, threads);
  if (ex.exact) return *ex.exact;
  check_combination(ex);
  return estimate_once(ex, ex.grid.h, c.count("estimator.M"), derive_seed(c.seed(), seeds::kEstimate)).value;
}

inline std::optional<double> regression_z_max(const Config& c, const Driver& f, const FactorModel& m) {
  if (!c.flag("driver.truncate")) return std::nullopt;
  return bounds(f, m).Z_max;
}

/// Regression solution on a bundle of estimator.M paths.
inline SolvedEbsde regression_solution(const Config& c, std::size_t threads, PathBundle* bundle_out = nullptr) {
  const FactorModel m = build_model(c);
  const TimeGrid g = build_grid(c);
  const Driver f = build_driver(c);
  const double lam = resolve_lambda_hat(c, threads);
  PathBundle paths = simulate_paths(m, g, c.count("estimator.M"), derive_seed(c.seed(), seeds::kRegression), threads);
  SolvedEbsde sol = backward_regression(paths, f, lam, c.count("train.basis_degree"), resolve_y0(c, m, f), m,
                                        regression_z_max(c, f, m));
  if (bundle_out) *bundle_out = std::move(paths);
  return sol;
}

/// Solution for evaluate/utility: regression is recomputed, neural solvers
/// come from the checkpoint.
inline SolvedEbsde load_solution(const Config& c, const RunContext& ctx) {
  const SolverConfig sc = build_solver_config(c, ctx.threads);
  if (sc.kind == SolverKind::Regression) return regression_solution(c, ctx.threads);
  const auto path = ctx.checkpoint_path();
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::IoError, "missing checkpoint " + path.string() + " (run train first or pass --checkpoint)");
  TrainState st = load_checkpoint(path.string());
  const std::size_t want = sc.kind == SolverKind::LAeBSDE ? 2 : 1;
  require(st.nets.size() == want, ErrorCode::InvalidCombination,
          "checkpoint holds " + std::to_string(st.nets.size()) + " network(s) but train.solver=" +
              solver_name(sc.kind) + " needs " + std::to_string(want));
  require(st.nets.back().out_dim() == sc.model.dims(), ErrorCode::InvalidCombination,
          "checkpoint Z-network width does not match model.kappa");
  return wrap_solution(sc, std::move(st));
}

inline std::size_t last_index(double T, double h) {
  return static_cast<std::size_t>(std::floor(T / h * (1.0 + 1e-12)));
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_simulate(const Config& c, const RunContext& ctx) {
  const FactorModel m = build_model(c);
  const TimeGrid g = build_grid(c);
  const std::size_t n = c.count("simulate.paths");
  require(n >= 1, ErrorCode::ConfigError, "simulate.paths must be at least 1");
  if (ctx.dry_run) return 0;
  const PathBundle b = simulate_paths(m, g, n, derive_seed(c.seed(), seeds::kSimulate), ctx.threads);
  std::vector<double> tau(n);
  double mean = 0.0;
  std::size_t late = 0;
  for (std::size_t j = 0; j < n; ++j) {
    tau[j] = b.tau(j);
    mean += tau[j];
    if (tau[j] > g.T + 5.0) ++late;
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double t : tau) var += (t - mean) * (t - mean);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  std::sort(tau.begin(), tau.end());
  CsvTable s({"stat", "value"}, c.provenance());
  s.row() << "n_paths" << n;
  s.row() << "h" << g.h;
  s.row() << "T" << g.T;
  s.row() << "n_T" << g.n_T();
  s.row() << "mean_tau" << mean;
  s.row() << "sd_tau" << std::sqrt(var);
  for (double q : {0.05, 0.25, 0.5, 0.75, 0.95})
    s.row() << ("q" + std::to_string(static_cast<int>(std::lround(q * 100))) + "_tau") << detail::quantile_sorted(tau, q);
  s.row() << "max_tau" << tau.back();
  s.row() << "frac_tau_gt_T_plus_5" << static_cast<double>(late) / static_cast<double>(n);
  s.write(ctx.out_dir / "simulate_summary.csv");
  if (c.flag("simulate.dump")) {
    std::vector<std::string> head{"path", "k", "t", "v"};
    for (std::size_t i = 0; i < b.dims(); ++i) head.push_back("dw_" + std::to_string(i + 1));
    CsvTable p(head, c.provenance());
    for (std::size_t j = 0; j < n; ++j) {
      const PathView pv = b.view(j);
      for (std::size_t k = 0; k <= pv.n_ret; ++k) {
        auto r = p.row();
        r << j << k << g.h * static_cast<double>(k) << pv.v[k];
        for (std::size_t i = 0; i < b.dims(); ++i) {
          if (k < pv.n_ret) r << pv.dw_at(k)[i];
          else r << "";
        }
      }
    }
    p.write(ctx.out_dir / "paths.csv");
  }
  detail::announce(ctx, "mean tau " + fmt_num(mean) + " over " + std::to_string(n) + " paths");
  return 0;
}

inline int cmd_bounds(const Config& c, const RunContext& ctx) {
  const FactorModel m = build_model(c);
  const Driver f = build_driver(c);
  if (ctx.dry_run) return 0;
  auto [cv, cz] = driver_lipschitz(f);
  const double k_an = driver_k_analytic(f);
  const double k_num = driver_k_numeric(f);
  CsvTable t({"quantity", "value", "note"}, c.provenance());
  t.row() << "K" << k_num << "sup |F(v,0)| on mesh [-20,20]";
  if (k_an >= 0.0) t.row() << "K_analytic" << k_an << "closed form";
  else t.row() << "K_analytic" << "nan" << "no closed form for this constraint set";
  t.row() << "C_v" << cv << "";
  t.row() << "C_z" << cz << "";
  t.row() << "C_mu" << m.c_mu() << "";
  t.row() << "kappa_norm" << m.kappa_norm() << "";
  try {
    const double zmax = z_max_bound(m.kappa_norm(), cv, m.c_mu());
    t.row() << "Z_max" << zmax << "";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BoundUnavailable) throw;
    t.row() << "Z_max" << "nan" << std::string("unavailable: ") + e.what();
    if (ctx.log) *ctx.log << "warning: Z_max unavailable: " << e.what() << "\n";
  }
  const MomentBounds mb = exp_moment_bounds(m, m.v0);
  t.row() << "B_plus" << mb.b_plus << "";
  t.row() << "B_minus" << mb.b_minus << "";
  t.row() << "gamma_threshold" << mb.gamma_threshold << "";
  t.write(ctx.out_dir / "bounds.csv");
  return 0;
}

inline int cmd_estimate_lambda(const Config& c, const RunContext& ctx) {
  LambdaExperiment ex = detail::lambda_experiment(c, ctx.threads);
  check_combination(ex);
  const std::size_t M = c.count("estimator.M");
  const std::size_t reps = std::max<std::size_t>(1, c.count("estimator.reps"));
  require(M >= 1, ErrorCode::ConfigError, "estimator.M must be at least 1");
  if (ctx.dry_run) return 0;
  const std::uint64_t seed = derive_seed(c.seed(), seeds::kEstimate);
  LambdaEstimate e = reps == 1 ? estimate_once(ex, ex.grid.h, M, seed)
                               : repeat_estimate(reps, seed, [&](std::uint64_t s) {
                                   return estimate_once(ex, ex.grid.h, M, s);
                                 });
  CsvTable t({"method", "h", "M", "reps", "seed", "value", "variance", "std_error", "mean_tau", "exact", "abs_error"},
             c.provenance());
  {
    auto r = t.row();
    r << method_name(ex.method) << ex.grid.h << M << reps << c.seed() << e.value << e.variance << e.std_error
      << e.mean_tau;
    if (ex.exact) r << *ex.exact << std::abs(e.value - *ex.exact);
    else r << "" << "";
  }
  t.write(ctx.out_dir / "lambda_estimate.csv");
  if (reps > 1) {
    CsvTable rv({"rep", "value"}, c.provenance());
    for (std::size_t i = 0; i < e.rep_values.size(); ++i) rv.row() << i << e.rep_values[i];
    rv.write(ctx.out_dir / "lambda_reps.csv");
  }
  detail::announce(ctx, "lambda " + fmt_num(e.value) + " (" + fmt_num(e.runtime) + " s)");
  return 0;
}

inline int cmd_train(const Config& c, const RunContext& ctx) {
  const SolverConfig sc = build_solver_config(c, ctx.threads);
  if (sc.kind == SolverKind::Regression) {
    if (ctx.dry_run) return 0;
    PathBundle paths;
    SolvedEbsde sol = detail::regression_solution(c, ctx.threads, &paths);
    CsvTable t({"index", "t", "center", "scale", "degree", "coef_y", "coef_z"}, c.provenance());
    for (std::size_t i = 0; i < sol.tables.size(); ++i) {
      std::string cy, cz;
      for (double x : sol.tables.cy[i]) cy += (cy.empty() ? "" : " ") + fmt_num(x);
      for (double x : sol.tables.cz[i]) cz += (cz.empty() ? "" : " ") + fmt_num(x);
      t.row() << i << sc.grid.h * static_cast<double>(i) << sol.tables.center[i] << sol.tables.scale[i]
              << (sol.tables.cy[i].size() - 1) << cy << cz;
    }
    t.write(ctx.out_dir / "regression_tables.csv");
    CsvTable s({"solver", "lambda_hat", "y0", "paths", "degree", "reduced_indices", "terminal_mismatch"},
               c.provenance());
    s.row() << "regression" << sol.lambda() << sol.y0 << paths.n_paths() << sol.tables.degree << sol.tables.reduced
            << terminal_mismatch(sol, paths);
    s.write(ctx.out_dir / "train_summary.csv");
    return 0;
  }
  if (ctx.dry_run) return 0;
  const std::size_t every = std::max<std::size_t>(1, sc.steps / 20);
  TrainResult r = train_solver(sc, [&](const TrainLogRow& row) {
    if (ctx.log && row.step % every == 0)
      *ctx.log << "step " << row.step << " loss " << fmt_num(row.loss) << " lambda " << fmt_num(row.lambda_bar)
               << "\n";
  });
  CsvTable tl({"step", "loss", "lambda_bar"}, c.provenance());
  for (const auto& row : r.log.rows) tl.row() << row.step << row.loss << row.lambda_bar;
  tl.write(ctx.out_dir / "training_log.csv");
  CsvTable el({"step", "eval_loss"}, c.provenance());
  for (const auto& row : r.log.eval) el.row() << row.step << row.eval_loss;
  el.write(ctx.out_dir / "eval_log.csv");
  std::filesystem::create_directories(ctx.checkpoint_path().parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : ctx.checkpoint_path().parent_path());
  save_checkpoint(r.solution.state, ctx.checkpoint_path().string());
  CsvTable s({"solver", "steps", "lambda_bar", "K", "y0", "final_loss", "final_eval_loss"}, c.provenance());
  {
    auto row = s.row();
    row << solver_name(sc.kind) << sc.steps << r.solution.lambda() << sc.K << sc.y0
        << (r.log.rows.empty() ? 0.0 : r.log.rows.back().loss);
    if (r.log.eval.empty()) row << "";
    else row << r.log.eval.back().eval_loss;
  }
  s.write(ctx.out_dir / "train_summary.csv");
  detail::announce(ctx, "lambda_bar " + fmt_num(r.solution.lambda()));
  return 0;
}

inline int cmd_evaluate(const Config& c, const RunContext& ctx) {
  const SolverConfig sc = build_solver_config(c, ctx.threads);
  const auto oracle = build_oracle(c, sc.model, sc.driver);
  if (!oracle)
    throw Error(ErrorCode::InvalidCombination,
                "evaluate needs a closed-form solution; driver " + driver_kind_name(sc.driver.kind) + " has none");
  oracle->check_validity(sc.model);
  if (ctx.dry_run) return 0;
  const SolvedEbsde sol = detail::load_solution(c, ctx);
  const PathBundle paths =
      simulate_paths(sc.model, sc.grid, sc.eval_size(), derive_seed(c.seed(), seeds::kEvaluate), ctx.threads);
  const ErrorReport rep = evaluate(sol, *oracle, paths, sc.grid.T, ctx.threads);
  CsvTable e({"t", "eps_Y", "excluded"}, c.provenance());
  for (std::size_t i = 0; i < rep.t.size(); ++i) e.row() << rep.t[i] << rep.eps_y[i] << rep.excluded[i];
  e.write(ctx.out_dir / "errors.csv");
  const RepStats sy = rep_stats(rep.path_I_y);
  const RepStats sz = rep_stats(rep.path_I_z);
  CsvTable ie({"h", "I_Y", "I_Z", "ci_lo", "ci_hi", "ci_z_lo", "ci_z_hi"}, c.provenance());
  ie.row() << sc.grid.h << rep.I_y << rep.I_z << sy.ci_lo << sy.ci_hi << sz.ci_lo << sz.ci_hi;
  ie.write(ctx.out_dir / "integral_errors.csv");
  CsvTable s({"solver", "lambda_bar", "lambda_exact", "lambda_abs_err", "eps_Y_T", "paths"}, c.provenance());
  s.row() << solver_name(sol.kind) << rep.lambda_bar << oracle->lambda << rep.lambda_abs_err << rep.eps_y.back()
          << paths.n_paths();
  s.write(ctx.out_dir / "evaluate_summary.csv");
  detail::announce(ctx, "eps_Y(T) " + fmt_num(rep.eps_y.back()) + ", |lambda error| " + fmt_num(rep.lambda_abs_err));
  return 0;
}

inline int cmd_table(const Config& c, const RunContext& ctx) {
  const std::string& kind = c.text("table.kind");
  LambdaExperiment ex = detail::lambda_experiment(c, ctx.threads);
  const auto hs = c.reals("table.h_list");
  const auto Ms = c.counts("table.M_list");
  const std::size_t reps = c.count("table.reps");
  const std::uint64_t seed = derive_seed(c.seed(), seeds::kTable);
  require(!hs.empty(), ErrorCode::ConfigError, "table.h_list is empty");
  for (double h : hs) require(h > 0.0, ErrorCode::ConfigError, "table.h_list entries must be positive");
  if (kind == "lambda") {
    check_combination(ex);
    require(!Ms.empty() && reps >= 1, ErrorCode::ConfigError, "table.M_list and table.reps must be set");
    if (ctx.dry_run) return 0;
    const auto cells = table_lambda_convergence(ex, hs, Ms, reps, seed);
    CsvTable t({"method", "h", "M", "mean", "variance", "reps", "seed", "statistic"}, c.provenance());
    for (const auto& cell : cells)
      t.row() << method_name(ex.method) << cell.h << cell.M << cell.mean << cell.variance << cell.reps << cell.seed
              << (ex.exact ? "abs_error" : "estimate");
    t.write(ctx.out_dir / "lambda_table.csv");
    return 0;
  }
  if (kind == "comparison") {
    check_combination(ex);
    const SolverConfig base = build_solver_config(c, ctx.threads);
    if (ctx.dry_run) return 0;
    const auto rows = table_method_comparison(ex, c.count("estimator.M"), std::max<std::size_t>(1, c.count("estimator.reps")),
                                              base, c.count("table.trainings"), seed);
    CsvTable t({"method", "mean", "variance", "runs", "seed"}, c.provenance());
    for (const auto& r : rows) t.row() << r.method << r.mean << r.variance << r.runs << seed;
    t.write(ctx.out_dir / "method_comparison.csv");
    return 0;
  }
  // err-h
  const auto oracle = build_oracle(c, ex.model, ex.driver);
  if (!oracle) throw Error(ErrorCode::InvalidCombination, "err-h table needs a closed-form solution");
  require(!Ms.empty(), ErrorCode::ConfigError, "table.M_list must give the path count");
  if (ctx.dry_run) return 0;
  const Driver f = build_driver(c);
  const double lam = detail::resolve_lambda_hat(c, ctx.threads);
  const auto zmax = detail::regression_z_max(c, f, ex.model);
  const std::size_t deg = c.count("train.basis_degree");
  const auto rows = err_h_study(*oracle, ex.model, ex.grid, f, hs, Ms.front(), lam, deg, ex.y0, seed, zmax, ctx.threads);
  const auto shifted =
      err_h_study(*oracle, ex.model, ex.grid, f, hs, Ms.front(), lam + 0.1, deg, ex.y0, seed, zmax, ctx.threads);
  CsvTable t({"h", "M", "lambda_hat", "err", "err_lambda_plus_0.1", "seed"}, c.provenance());
  for (std::size_t i = 0; i < rows.size(); ++i)
    t.row() << rows[i].h << Ms.front() << lam << rows[i].err << shifted[i].err << seed;
  t.write(ctx.out_dir / "err_h.csv");
  return 0;
}

inline int cmd_utility(const Config& c, const RunContext& ctx) {
  const SolverConfig sc = build_solver_config(c, ctx.threads);
  const UtilitySpec spec = build_utility(c, sc.driver);
  const double x_min = c.real("utility.x_min"), x_max = c.real("utility.x_max");
  const std::size_t nx = c.count("utility.x_points"), nt = c.count("utility.t_points");
  require(nx >= 2 && nt >= 2, ErrorCode::ConfigError, "utility.x_points and utility.t_points must be at least 2");
  require(x_max > x_min, ErrorCode::ConfigError, "utility.x_max must exceed utility.x_min");
  if (spec.kind != UtilityKind::Exp)
    require(x_min > 0.0, ErrorCode::DomainError, "utility.x_min must be positive for log and power utilities");
  if (ctx.dry_run) return 0;
  SolvedEbsde sol = detail::load_solution(c, ctx);
  sol.y0 = spec.y0();
  const PathBundle paths = simulate_paths(sc.model, sc.grid, std::max<std::size_t>(1, c.count("utility.paths")),
                                          derive_seed(c.seed(), seeds::kUtility), ctx.threads);
  const std::size_t last = detail::last_index(sc.grid.T, sc.grid.h);
  const PathView p0 = paths.view(0);

  std::vector<double> xs(nx);
  for (std::size_t i = 0; i < nx; ++i)
    xs[i] = x_min + (x_max - x_min) * static_cast<double>(i) / static_cast<double>(nx - 1);
  std::vector<std::size_t> ts;
  for (std::size_t i = 0; i < nt; ++i) {
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(last) * static_cast<double>(i) / static_cast<double>(nt - 1)));
    if (ts.empty() || ts.back() != k) ts.push_back(k);
  }
  CsvTable surf({"t", "x", "U"}, c.provenance());
  for (const auto& pt : utility_surface(sol, spec, p0, ts, xs)) surf.row() << pt.t << pt.x << pt.u;
  surf.write(ctx.out_dir / "surface.csv");

  std::vector<std::string> head{"t", "v"};
  for (std::size_t i = 0; i < sol.d; ++i) head.push_back("pi_" + std::to_string(i + 1));
  CsvTable strat(head, c.provenance());
  for (std::size_t k = 0; k <= std::min(last, p0.n_ret); ++k) {
    auto r = strat.row();
    r << sc.grid.h * static_cast<double>(k) << p0.v[k];
    for (double x : optimal_strategy(sol, spec, k, p0.v[k])) r << x;
  }
  strat.write(ctx.out_dir / "strategy.csv");

  const MartingaleReport rep = martingale_check(sol, spec, paths, sc.grid.T, solved_strategy(sol, spec));
  CsvTable mt({"t", "mean_U", "std_err"}, c.provenance());
  for (std::size_t i = 0; i < rep.t.size(); ++i) mt.row() << rep.t[i] << rep.mean_u[i] << rep.std_err[i];
  mt.write(ctx.out_dir / "martingale.csv");
  CsvTable s({"kind", "x0", "y0", "U0", "u0_x0", "max_rel_drift", "paths"}, c.provenance());
  s.row() << (spec.kind == UtilityKind::Power ? "power" : spec.kind == UtilityKind::Exp ? "exp" : "log") << spec.x0
          << spec.y0() << rep.u0 << spec.u0(spec.x0) << rep.max_rel_drift << paths.n_paths();
  s.write(ctx.out_dir / "utility_summary.csv");
  detail::announce(ctx, "martingale max relative drift " + fmt_num(rep.max_rel_drift));
  return 0;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "bounds", "estimate-lambda", "train",
                                                 "evaluate", "table",  "utility"};
  return names;
}

inline int run_command(const std::string& name, const Config& c, const RunContext& ctx) {
  if (name == "simulate") return cmd_simulate(c, ctx);
  if (name == "bounds") return cmd_bounds(c, ctx);
  if (name == "estimate-lambda") return cmd_estimate_lambda(c, ctx);
  if (name == "train") return cmd_train(c, ctx);
  if (name == "evaluate") return cmd_evaluate(c, ctx);
  if (name == "table") return cmd_table(c, ctx);
  if (name == "utility") return cmd_utility(c, ctx);
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + name + "'");
}

}  // namespace ebsde
