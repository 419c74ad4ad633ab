#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ebsde/csv.hpp"
#include "ebsde/metrics.hpp"

using namespace ebsde;

TEST(RepStats, KnownValues) {
  const RepStats s = rep_stats({1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0});
  EXPECT_EQ(s.n, 10u);
  EXPECT_DOUBLE_EQ(s.mean, 5.5);
  EXPECT_DOUBLE_EQ(s.variance, 55.0 / 6.0);
  // t_{0.975, 9} = 2.262157162798205
  const double half = 2.262157162798205 * std::sqrt(55.0 / 6.0 / 10.0);
  EXPECT_NEAR(s.ci_lo, 5.5 - half, 1e-12);
  EXPECT_NEAR(s.ci_hi, 5.5 + half, 1e-12);
}

TEST(RepStats, Degenerate) {
  EXPECT_EQ(rep_stats({}).n, 0u);
  const RepStats one = rep_stats({2.5});
  EXPECT_EQ(one.mean, 2.5);
  EXPECT_EQ(one.ci_lo, 2.5);
  EXPECT_EQ(one.variance, 0.0);
}

TEST(RepStats, CoverageProperty) {
  // roughly 95% of t-intervals from normal samples cover the mean
  std::mt19937_64 eng(5);
  std::normal_distribution<double> n01(1.0, 2.0);
  int cover = 0;
  for (int r = 0; r < 2000; ++r) {
    std::vector<double> xs(8);
    for (auto& x : xs) x = n01(eng);
    const RepStats s = rep_stats(xs);
    cover += s.ci_lo <= 1.0 && 1.0 <= s.ci_hi;
  }
  EXPECT_NEAR(cover / 2000.0, 0.95, 0.015);
}

namespace {
LambdaExperiment ex2() {
  LambdaExperiment ex;
  ex.model = FactorModel::ou(2.0, {2.0}, 0.5);
  ex.grid = TimeGrid{0.05, 1.0, 0};
  ex.driver = Driver::example2(1.0);
  ex.exact = example2_solution(1.0, 2.0).lambda;
  return ex;
}
}  // namespace

TEST(LambdaTable, ShapeSeedsAndDeterminism) {
  LambdaExperiment ex = ex2();
  const auto a = table_lambda_convergence(ex, {0.05, 0.02}, {100, 400}, 4, 7);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0].h, 0.05);
  EXPECT_EQ(a[1].M, 400u);
  EXPECT_EQ(a[2].h, 0.02);
  for (const auto& c : a) {
    EXPECT_EQ(c.values.size(), 4u);
    EXPECT_GE(c.mean, 0.0);
  }
  EXPECT_NE(a[0].seed, a[1].seed);
  ex.threads = 3;
  const auto b = table_lambda_convergence(ex, {0.05, 0.02}, {100, 400}, 4, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].values, b[i].values);
    EXPECT_EQ(a[i].mean, b[i].mean);
    EXPECT_EQ(a[i].variance, b[i].variance);
  }
}

TEST(LambdaTable, ErrorShrinksWithPaths) {
  const auto t = table_lambda_convergence(ex2(), {0.02}, {200, 20000}, 20, 1);
  EXPECT_LT(t[1].mean, t[0].mean);
  EXPECT_LT(t[1].variance, t[0].variance);
}

TEST(LambdaTable, RejectsInvalidCombinations) {
  LambdaExperiment ex = ex2();
  ex.driver = Driver::power_utility(0.5, RiskPremiumSpec::truncated_linear(0.8, 3.0));
  try {
    table_lambda_convergence(ex, {0.05}, {10}, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidCombination);
  }
  ex.method = LambdaMethod::LinearExp;
  EXPECT_THROW(table_lambda_convergence(ex, {0.05}, {10}, 2, 1), Error);
  ex.driver = Driver::example1(1.0);
  ex.method = LambdaMethod::ColeHopf;
  EXPECT_THROW(table_lambda_convergence(ex, {0.05}, {10}, 2, 1), Error);
}

TEST(MethodComparison, ExactAndMonteCarloRows) {
  LambdaExperiment ex = ex2();
  const auto rows = table_method_comparison(ex, 500, 5, SolverConfig{}, 0, 3);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].method, "exact");
  EXPECT_EQ(rows[0].mean, *ex.exact);
  EXPECT_EQ(rows[1].method, "mc");
  EXPECT_EQ(rows[1].runs, 5u);
  EXPECT_NEAR(rows[1].mean, *ex.exact, 0.05);
}

TEST(ErrH, PenalizesWrongLambda) {
  const FactorModel m = FactorModel::ou(1.5, {0.8}, 0.0);
  const auto o = example1_solution(1.0, 1.5, 0.8);
  const auto good = err_h_study(o, m, TimeGrid{0.01, 1.0, 0}, Driver::example1(1.0), {0.04, 0.02}, 3000, 0.0, 4,
                                o.y(0.0), 2, std::nullopt);
  const auto bad = err_h_study(o, m, TimeGrid{0.01, 1.0, 0}, Driver::example1(1.0), {0.04, 0.02}, 3000, 0.1, 4,
                               o.y(0.0), 2, std::nullopt);
  ASSERT_EQ(good.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(good[i].h, bad[i].h);
    EXPECT_GT(bad[i].err, good[i].err);
  }
}

TEST(Csv, FormattingAndQuoting) {
  EXPECT_EQ(fmt_num(0.1), "0.1");
  EXPECT_EQ(fmt_num(1e-20), "1e-20");
  EXPECT_EQ(std::stod(fmt_num(1.0 / 3.0)), 1.0 / 3.0);
  CsvTable t({"a", "b"}, "config_hash=abc seed=1");
  t.row() << 1.5 << "x,y";
  t.row() << std::size_t{3} << "say \"hi\"";
  EXPECT_EQ(t.str(), "# config_hash=abc seed=1\na,b\n1.5,\"x,y\"\n3,\"say \"\"hi\"\"\"\n");
}

TEST(Csv, WriteCreatesDirectoriesAndReportsFailure) {
  const auto dir = std::filesystem::temp_directory_path() / "ebsde_csv_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  CsvTable t({"x"});
  t.row() << 2.0;
  t.write(dir / "out.csv");
  std::ifstream in(dir / "out.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "x\n2\n");
  std::filesystem::remove_all(dir.parent_path());
  try {
    t.write("/proc/ebsde_nope/out.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
