#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ebsde/drivers.hpp"
#include "ebsde/oracles.hpp"
#include "ebsde/rng.hpp"
#include "ebsde/sde.hpp"

using namespace ebsde;

TEST(NormalCdf, Values) {
  EXPECT_EQ(normal_cdf(0.0), 0.5);
  EXPECT_EQ(normal_cdf(40.0), 1.0);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_cdf(-3.0), 0.0013498980316300946, 1e-17);
}

TEST(Example1, ClosedForm) {
  const auto s = example1_solution(1.0, 1.5, 0.8, ZConvention::Verbatim);
  EXPECT_EQ(s.lambda, 0.0);
  // mpmath: sqrt(2 pi) / (2 * 1.82) and 1 / 1.82
  EXPECT_NEAR(s.y(0.0), 0.688634141382143, 1e-12);
  EXPECT_NEAR(s.z(0.0), 0.549450549450549, 1e-12);
  EXPECT_LT(std::abs(s.z(12.0)), 1e-25);
  const auto m = example1_solution(1.0, 1.5, 0.8);
  EXPECT_NEAR(m.z(0.0), 0.8 * 0.549450549450549, 1e-12);
}

TEST(Example1, MarkovianZIsKappaTimesDerivative) {
  const double kappa = 0.8;
  const auto s = example1_solution(1.0, 1.5, kappa);
  for (double v = -4.0; v <= 4.0; v += 0.25) {
    const double e = 1e-5;
    const double dy = (s.y(v + e) - s.y(v - e)) / (2 * e);
    EXPECT_NEAR(s.z(v), kappa * dy, 1e-8);
  }
}

// The generator equation along the factor: (kappa^2/2) y'' + mu(v) y' + F(v) = lambda,
// checked with second differences of the closed form.
TEST(Example1, SolvesErgodicEquation) {
  const double mu = 1.5, kappa = 0.8, cv = 1.0;
  const auto s = example1_solution(cv, mu, kappa);
  for (double v = -3.0; v <= 3.0; v += 0.1) {
    const double e = 1e-4;
    const double y1 = (s.y(v + e) - s.y(v - e)) / (2 * e);
    const double y2 = (s.y(v + e) - 2 * s.y(v) + s.y(v - e)) / (e * e);
    const double lhs = 0.5 * kappa * kappa * y2 - mu * v * y1 + cv * v * std::exp(-0.5 * v * v);
    EXPECT_NEAR(lhs, s.lambda, 1e-6);
  }
}

TEST(Example2, Lambda) {
  EXPECT_NEAR(example2_solution(0.75, std::sqrt(2.0)).lambda, 0.299206, 1e-6);
  EXPECT_NEAR(example2_solution(1.0, 2.0).lambda, 0.398942, 1e-6);
}

TEST(Example2, ContinuityAndParity) {
  const auto s = example2_solution(1.0, 2.0);
  EXPECT_EQ(s.z(0.0), 0.0);
  EXPECT_NEAR(s.z(1e-12), 0.0, 1e-11);
  EXPECT_NEAR(s.z(-1e-12), 0.0, 1e-11);
  EXPECT_EQ(s.y(0.0), 0.0);
  for (double v : {0.3, 1.1, 2.7, 6.0}) {
    EXPECT_EQ(s.z(-v), -s.z(v));
    EXPECT_EQ(s.y(-v), s.y(v));
  }
}

TEST(Example2, ZIsKappaTimesDerivative) {
  for (double kappa : {std::sqrt(2.0), 2.0}) {
    const auto s = example2_solution(1.0, kappa);
    for (double v = -7.9; v <= 7.9; v += 0.0625) {
      const double e = 1e-4;
      const double dy = (s.y(v + e) - s.y(v - e)) / (2 * e);
      const double z = s.z(v);
      EXPECT_NEAR(z, kappa * dy, 1e-6 * std::max(std::abs(z), 1e-3)) << "v=" << v;
    }
  }
}

TEST(Example2, SolvesErgodicEquation) {
  const double kappa = 2.0, mu = 2.0, cv = 1.0;
  const auto s = example2_solution(cv, kappa);
  for (double v = -3.0; v <= 3.0; v += 0.1) {
    if (std::abs(v) < 0.05) continue;
    const double e = 1e-3;
    const double y1 = (s.y(v + e) - s.y(v - e)) / (2 * e);
    const double y2 = (s.y(v + e) - 2 * s.y(v) + s.y(v - e)) / (e * e);
    const double lhs = 0.5 * kappa * kappa * y2 - mu * v * y1 + cv * std::abs(v) * std::exp(-0.5 * v * v);
    EXPECT_NEAR(lhs, s.lambda, 1e-5) << "v=" << v;
  }
}

TEST(Example2, FrozenValues) {
  // independent reference by high-order quadrature of z / kappa
  const auto a = example2_solution(1.0, 2.0);
  EXPECT_NEAR(a.y(1.0), 0.0340014783330198, 1e-10);
  EXPECT_NEAR(a.y(3.0), -0.0430453405783447, 1e-10);
  const auto b = example2_solution(0.75, std::sqrt(2.0));
  EXPECT_NEAR(b.y(1.0), 0.0510022174995297, 1e-10);
  EXPECT_NEAR(b.y(-5.0), -0.2072776903004143, 1e-10);
}

TEST(Example2, Validity) {
  const auto s = example2_solution(1.0, 2.0);
  EXPECT_NO_THROW(s.check_validity(FactorModel::ou(2.0, {2.0}, 0.5)));
  try {
    s.check_validity(FactorModel::ou(1.5, {2.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidityViolated);
  }
}

TEST(Oracles, ZBoundedByZMax) {
  const auto m1 = FactorModel::ou(1.5, {0.8});
  const auto s1 = example1_solution(1.0, 1.5, 0.8);
  const double zmax1 = bounds(Driver::example1(1.0), m1).Z_max;
  const auto m2 = FactorModel::ou(1.0, {std::sqrt(2.0)});
  const auto s2 = example2_solution(0.75, std::sqrt(2.0));
  const double zmax2 = bounds(Driver::example2(0.75), m2).Z_max;
  for (double v = -10.0; v <= 10.0; v += 1e-3) {
    EXPECT_LE(std::abs(s1.z(v)), zmax1);
    EXPECT_LE(std::abs(s2.z(v)), zmax2);
  }
}

// One-step forward recursion with the oracle: mean residual is O(h).
TEST(Oracles, ForwardRecursionConsistency) {
  const double kappa = 0.8, mu = 1.5;
  const auto s = example1_solution(1.0, mu, kappa);
  const auto f = Driver::example1(1.0);
  auto mean_abs_residual = [&](double h) {
    GaussianStream rng(3, 0);
    double acc = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double v = rng.scaled(0.5);
      const double dw = rng.scaled(std::sqrt(h));
      const double vn = v - mu * v * h + kappa * dw;
      const double z[1] = {s.z(v)};
      const double pred = s.y(v) - h * f.eval(v, z) + s.lambda * h + s.z(v) * dw;
      acc += pred - s.y(vn);
    }
    return std::abs(acc / n);
  };
  const double r1 = mean_abs_residual(0.02), r2 = mean_abs_residual(0.005);
  EXPECT_LT(r1, 0.02 * 0.1);
  EXPECT_LT(r2, r1);
}

TEST(ConstantPremium, PowerLambda) {
  const auto s = constant_premium_power_solution(0.5, {0.3, 0.4});
  EXPECT_NEAR(s.lambda, 0.5 / 1.0 * 0.25, 1e-15);
  EXPECT_EQ(s.z(1.0), 0.0);
}
