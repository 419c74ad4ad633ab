#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "ebsde/drivers.hpp"
#include "ebsde/ergodic_cost.hpp"
#include "ebsde/error.hpp"
#include "ebsde/oracles.hpp"
#include "ebsde/rng.hpp"
#include "ebsde/sde.hpp"
#include "ebsde/solvers.hpp"

namespace ebsde {

/// Mean, unbiased variance and a two-sided 95% Student-t interval.
struct RepStats {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

inline RepStats rep_stats(const std::vector<double>& xs) {
  RepStats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  if (s.n < 2) {
    s.ci_lo = s.ci_hi = s.mean;
    return s;
  }
  for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
  s.variance /= static_cast<double>(s.n - 1);
  boost::math::students_t dist(static_cast<double>(s.n - 1));
  const double q = boost::math::quantile(dist, 0.975);
  const double half = q * std::sqrt(s.variance / static_cast<double>(s.n));
  s.ci_lo = s.mean - half;
  s.ci_hi = s.mean + half;
  return s;
}

/// A lambda experiment: factor, horizon, driver and estimator.
struct LambdaExperiment {
  FactorModel model;
  TimeGrid grid;
  Driver driver;
  LambdaMethod method = LambdaMethod::Ratio;
  std::optional<double> exact;  // when set, cells report mean |lambda_hat - exact|
  double K = 1.0;
  double y0 = 0.0;              // linear-exp only
  std::size_t threads = 1;
};

inline LambdaEstimate estimate_once(const LambdaExperiment& ex, double h, std::size_t M, std::uint64_t seed) {
  TimeGrid g = ex.grid;
  g.h = h;
  const PathSource src = PathSource::stream(ex.model, g, M, seed, ex.threads);
  switch (ex.method) {
    case LambdaMethod::Ratio: return lambda_ratio(ex.driver, src);
    case LambdaMethod::LinearExp:
      if (ex.driver.kind != DriverKind::Exp || ex.driver.pi.kind != SetKind::Full)
        throw Error(ErrorCode::InvalidCombination, "linear-exp estimator needs an exp driver with Full constraint set");
      return lambda_linear_exp(ex.driver.theta, ex.driver.d, src, ex.y0);
    case LambdaMethod::ColeHopf:
      if (ex.driver.kind != DriverKind::Power || ex.driver.pi.kind != SetKind::Full)
        throw Error(ErrorCode::InvalidCombination, "Cole-Hopf estimator needs a power driver with Full constraint set");
      return lambda_colehopf_power(ex.driver.delta, ex.driver.theta, ex.driver.d, src, ex.K);
  }
  return {};
}

inline void check_combination(const LambdaExperiment& ex) {
  if (ex.method == LambdaMethod::Ratio && ex.driver.depends_on_z())
    throw Error(ErrorCode::InvalidCombination,
                "ratio estimator cannot be used with the z-dependent " + driver_kind_name(ex.driver.kind) + " driver");
  if (ex.method == LambdaMethod::LinearExp && (ex.driver.kind != DriverKind::Exp || ex.driver.pi.kind != SetKind::Full))
    throw Error(ErrorCode::InvalidCombination, "linear-exp estimator needs an exp driver with Full constraint set");
  if (ex.method == LambdaMethod::ColeHopf && (ex.driver.kind != DriverKind::Power || ex.driver.pi.kind != SetKind::Full))
    throw Error(ErrorCode::InvalidCombination, "Cole-Hopf estimator needs a power driver with Full constraint set");
}

struct LambdaCell {
  double h = 0.0;
  std::size_t M = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  double mean = 0.0;      // mean abs error when exact is known, else mean estimate
  double variance = 0.0;
  std::vector<double> values;  // raw estimates per repetition
};

inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t ih, std::size_t im) {
  return derive_seed(seed, 7919 * (ih + 1) + 104729 * (im + 1));
}

/// Repetition statistics of the estimator over an (h, M) grid.
inline std::vector<LambdaCell> table_lambda_convergence(const LambdaExperiment& ex, const std::vector<double>& hs,
                                                        const std::vector<std::size_t>& Ms, std::size_t reps,
                                                        std::uint64_t seed) {
  check_combination(ex);
  std::vector<LambdaCell> out;
  for (std::size_t ih = 0; ih < hs.size(); ++ih)
    for (std::size_t im = 0; im < Ms.size(); ++im) {
      LambdaCell c;
      c.h = hs[ih];
      c.M = Ms[im];
      c.reps = reps;
      c.seed = cell_seed(seed, ih, im);
      LambdaEstimate e = repeat_estimate(reps, c.seed, [&](std::uint64_t s) { return estimate_once(ex, c.h, c.M, s); });
      c.values = e.rep_values;
      std::vector<double> stat;
      for (double v : c.values) stat.push_back(ex.exact ? std::abs(v - *ex.exact) : v);
      RepStats rs = rep_stats(stat);
      c.mean = rs.mean;
      c.variance = rs.variance;
      out.push_back(std::move(c));
    }
  return out;
}

struct MethodRow {
  std::string method;
  double mean = 0.0;
  double variance = 0.0;
  std::size_t runs = 0;
};

/// Exact / Monte Carlo / GeBSDE / LAeBSDE comparison of lambda estimates.
/// Neural rows train `trainings` independent networks from derived seeds.
inline std::vector<MethodRow> table_method_comparison(const LambdaExperiment& ex, std::size_t mc_paths,
                                                      std::size_t mc_reps, const SolverConfig& base,
                                                      std::size_t trainings, std::uint64_t seed) {
  std::vector<MethodRow> rows;
  if (ex.exact) rows.push_back({"exact", *ex.exact, 0.0, 1});
  {
    LambdaEstimate e = repeat_estimate(mc_reps, derive_seed(seed, 1),
                                       [&](std::uint64_t s) { return estimate_once(ex, ex.grid.h, mc_paths, s); });
    rows.push_back({"mc", e.value, e.variance, mc_reps});
  }
  for (SolverKind k : {SolverKind::GeBSDE, SolverKind::LAeBSDE}) {
    if (trainings == 0) break;
    std::vector<double> vals;
    for (std::size_t r = 0; r < trainings; ++r) {
      SolverConfig cfg = base;
      cfg.kind = k;
      cfg.seed = derive_seed(seed, 50 + r + (k == SolverKind::LAeBSDE ? 1000 : 0));
      cfg.eval_every = 0;
      vals.push_back(train_solver(cfg).solution.lambda());
    }
    RepStats rs = rep_stats(vals);
    rows.push_back({solver_name(k), rs.mean, rs.variance, trainings});
  }
  return rows;
}

struct ErrHRow {
  double h = 0.0;
  double err = 0.0;
  double lambda_hat = 0.0;
};

/// Err(h) of the regression scheme against the oracle for each step size,
/// with lambda_hat injected.
inline std::vector<ErrHRow> err_h_study(const OracleSolution& oracle, const FactorModel& model, const TimeGrid& grid,
                                        const Driver& drv, const std::vector<double>& hs, std::size_t M,
                                        double lambda_hat, std::size_t degree, double y0, std::uint64_t seed,
                                        std::optional<double> z_max, std::size_t threads = 1) {
  std::vector<ErrHRow> out;
  for (std::size_t ih = 0; ih < hs.size(); ++ih) {
    TimeGrid g = grid;
    g.h = hs[ih];
    PathBundle paths = simulate_paths(model, g, M, derive_seed(seed, 31 + ih), threads);
    SolvedEbsde sol = backward_regression(paths, drv, lambda_hat, degree, y0, model, z_max, true);
    out.push_back({hs[ih], regression_error(sol, oracle, paths), lambda_hat});
  }
  return out;
}

}  // namespace ebsde
