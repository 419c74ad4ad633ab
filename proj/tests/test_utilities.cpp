#include <gtest/gtest.h>

#include <cmath>

#include "ebsde/oracles.hpp"
#include "ebsde/solvers.hpp"
#include "ebsde/utilities.hpp"

using namespace ebsde;

namespace {

const FactorModel kPowerModel = FactorModel::ou(3.0, {1.3}, 0.0);
const auto kTheta = RiskPremiumSpec::truncated_linear(0.8, 3.0);

std::vector<SolvedEbsde> all_kinds(const Driver& drv, const FactorModel& model, double y0) {
  SolverConfig c;
  c.model = model;
  c.grid = TimeGrid{0.05, 1.0, 0};
  c.driver = drv;
  c.batch = 8;
  c.steps = 5;
  c.K = 4.5;
  c.y0 = y0;
  std::vector<SolvedEbsde> out;
  for (SolverKind k : {SolverKind::GeBSDE, SolverKind::LAeBSDE}) {
    c.kind = k;
    out.push_back(train_solver(c).solution);
  }
  const PathBundle b = simulate_paths(model, c.grid, 300, 2);
  out.push_back(backward_regression(b, drv, 0.1, 3, y0, model, std::nullopt, true));
  return out;
}

std::vector<double> grid_x(double lo, double hi, std::size_t n) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return xs;
}

}  // namespace

TEST(Utility, Y0MatchesInitialUtility) {
  for (double a : {1.0, 0.3, 2.5})
    for (double x0 : {1.0, 0.7, 3.0}) {
      UtilitySpec p{UtilityKind::Power, 0.5, 0.5, a, x0};
      EXPECT_NEAR(p.value(x0, p.y0()), p.u0(x0), 1e-14 * std::abs(p.u0(x0)));
      UtilitySpec e{UtilityKind::Exp, 0.5, 0.4, a, x0};
      EXPECT_NEAR(e.value(x0, e.y0()), e.u0(x0), 1e-14 * std::abs(e.u0(x0)));
      UtilitySpec l{UtilityKind::Log, 0.5, 0.5, a, x0};
      EXPECT_NEAR(l.value(x0, l.y0()), l.u0(x0), 1e-14);
    }
}

TEST(Utility, DomainAndValidation) {
  UtilitySpec p;
  EXPECT_THROW(p.u0(-1.0), Error);
  p.delta = 1.0;
  EXPECT_THROW(p.validate(), Error);
  UtilitySpec e{UtilityKind::Exp, 0.5, 1.5, 1.0, 0.0};
  EXPECT_THROW(e.validate(), Error);
  EXPECT_NO_THROW(UtilitySpec({UtilityKind::Exp, 0.5, 0.5, 1.0, -2.0}).u0(-2.0));
}

TEST(Surface, InitialSliceIsExactlyInitialUtility) {
  const std::vector<double> xs = grid_x(0.1, 4.0, 25);
  for (UtilityKind kind : {UtilityKind::Power, UtilityKind::Log}) {
    UtilitySpec spec{kind, 0.5, 0.5, 1.7, 1.3};
    const Driver drv = kind == UtilityKind::Power ? Driver::power_utility(0.5, kTheta) : Driver::log_utility(kTheta);
    for (const auto& sol : all_kinds(drv, kPowerModel, spec.y0())) {
      const PathBundle b = simulate_paths(kPowerModel, TimeGrid{0.05, 1.0, 0}, 3, 9);
      for (const auto& pt : utility_surface(sol, spec, b.view(0), {0, 5, 20}, xs))
        if (pt.t == 0.0) EXPECT_EQ(pt.u, spec.u0(pt.x)) << solver_name(sol.kind);
    }
  }
  UtilitySpec spec{UtilityKind::Exp, 0.5, 0.5, 1.0, 0.0};
  for (const auto& sol : all_kinds(Driver::exp_utility(0.5, kTheta), kPowerModel, spec.y0())) {
    const PathBundle b = simulate_paths(kPowerModel, TimeGrid{0.05, 1.0, 0}, 3, 9);
    for (const auto& pt : utility_surface(sol, spec, b.view(0), {0, 10}, grid_x(-2.0, 2.0, 9)))
      if (pt.t == 0.0) EXPECT_EQ(pt.u, spec.u0(pt.x));
  }
}

TEST(Surface, PowerMonotoneAndConcaveInWealth) {
  UtilitySpec spec{UtilityKind::Power, 0.5, 0.5, 1.0, 1.0};
  const std::vector<double> xs = grid_x(0.1, 5.0, 50);
  for (const auto& sol : all_kinds(Driver::power_utility(0.5, kTheta), kPowerModel, spec.y0())) {
    const PathBundle b = simulate_paths(kPowerModel, TimeGrid{0.05, 1.0, 0}, 1, 4);
    std::vector<std::size_t> ts;
    for (std::size_t i = 0; i <= std::min<std::size_t>(20, b.view(0).n_ret); i += 5) ts.push_back(i);
    const auto pts = utility_surface(sol, spec, b.view(0), ts, xs);
    for (std::size_t r = 0; r < ts.size(); ++r) {
      const SurfacePoint* row = pts.data() + r * xs.size();
      for (std::size_t i = 1; i < xs.size(); ++i) EXPECT_GT(row[i].u, row[i - 1].u);
      for (std::size_t i = 1; i + 1 < xs.size(); ++i)
        EXPECT_LE(row[i + 1].u - 2.0 * row[i].u + row[i - 1].u, 1e-12 * std::abs(row[i].u));
    }
  }
}

TEST(Strategy, ClosedForms) {
  const Driver drv = Driver::power_utility(0.5, kTheta);
  const double z = 0.3, v = 0.5;
  UtilitySpec p{UtilityKind::Power, 0.5, 0.5, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(optimal_strategy(drv, p, v, &z)[0], (0.3 + 0.4) / 0.5);
  UtilitySpec e{UtilityKind::Exp, 0.5, 0.25, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(optimal_strategy(drv, e, v, &z)[0], (0.3 + 0.4) / 0.25);
  UtilitySpec l{UtilityKind::Log, 0.5, 0.5, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(optimal_strategy(drv, l, v, &z)[0], 0.4);
  Driver boxed = Driver::power_utility(0.5, kTheta, ConvexSet::box({-1.0}, {1.0}));
  EXPECT_DOUBLE_EQ(optimal_strategy(boxed, p, v, &z)[0], 1.0);
}

TEST(Strategy, TwoDimSecondCoordinateIsZero) {
  const FactorModel m = FactorModel::ou(3.0, {1.0, 0.83}, 0.0);
  const Driver drv = Driver::power_utility(0.5, kTheta, ConvexSet::axis_subspace({0}), 2);
  UtilitySpec spec{UtilityKind::Power, 0.5, 0.5, 1.0, 1.0};
  for (const auto& sol : all_kinds(drv, m, spec.y0())) {
    const PathBundle b = simulate_paths(m, TimeGrid{0.05, 1.0, 0}, 5, 3);
    for (std::size_t j = 0; j < 5; ++j) {
      const PathView p = b.view(j);
      for (std::size_t k = 0; k < std::min<std::size_t>(p.n_ret, 20); ++k) {
        const auto pi = optimal_strategy(sol, spec, k, p.v[k]);
        ASSERT_EQ(pi.size(), 2u);
        EXPECT_EQ(pi[1], 0.0);
      }
    }
  }
}

TEST(Wealth, Steps) {
  const double pi = 0.5, th = 0.2, dw = 0.1;
  EXPECT_DOUBLE_EQ(wealth_step(UtilityKind::Exp, 1.0, &pi, &th, &dw, 0.01, 1), 1.0 + 0.5 * 0.2 * 0.01 + 0.05);
  EXPECT_DOUBLE_EQ(wealth_step(UtilityKind::Power, 2.0, &pi, &th, &dw, 0.01, 1),
                   2.0 * std::exp(0.1 * 0.01 - 0.125 * 0.01 + 0.05));
  EXPECT_THROW(simulate_wealth([](std::size_t, double, double* p) { p[0] = 0.0; }, Driver::log_utility(kTheta),
                               UtilityKind::Log, simulate_paths(kPowerModel, TimeGrid{0.1, 1.0, 0}, 1, 1).view(0),
                               -1.0, 0.1, 3),
               Error);
}

TEST(Martingale, ConstantPremiumPowerIsMartingale) {
  const std::vector<double> th{0.6};
  const auto o = constant_premium_power_solution(0.5, th);
  const Driver drv = Driver::power_utility(0.5, RiskPremiumSpec::constant(th));
  UtilitySpec spec{UtilityKind::Power, 0.5, 0.5, 1.0, 1.0};
  const FactorModel m = FactorModel::ou(1.0, {1.0}, 0.0);
  const auto sol = oracle_solution_as_solved(o, drv, m, 0.02, spec.y0());
  const PathBundle b = simulate_paths(m, TimeGrid{0.02, 1.0, 0}, 20000, 6);
  const auto rep = martingale_check(sol, spec, b, 1.0, solved_strategy(sol, spec));
  EXPECT_EQ(rep.mean_u[0], spec.u0(1.0));
  for (std::size_t i = 1; i < rep.t.size(); ++i)
    EXPECT_LE(std::abs(rep.mean_u[i] - rep.u0), 4.5 * rep.std_err[i]) << "t=" << rep.t[i];
  // a suboptimal strategy loses utility on average
  const auto sub = martingale_check(sol, spec, b, 1.0, [](std::size_t, double, double* p) { p[0] = 0.0; });
  EXPECT_LT(sub.mean_u.back(), rep.u0 - 4.0 * sub.std_err.back());
}
