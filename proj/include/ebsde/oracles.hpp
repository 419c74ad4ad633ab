#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "ebsde/drivers.hpp"
#include "ebsde/error.hpp"
#include "ebsde/quadrature.hpp"
#include "ebsde/sde.hpp"

namespace ebsde {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Closed-form Markovian triplet (y, z, lambda). z is nonzero only in the
/// first Brownian coordinate for the benchmark examples.
struct OracleSolution {
  std::function<double(double)> y;
  std::function<double(double)> z;  // first coordinate
  double lambda = 0.0;
  std::size_t d = 1;
  // validity of the closed form: a required (mu, |kappa|) pairing, if any
  bool requires_mu_half_kappa2 = false;
  double kappa = 0.0;
  std::string name;

  std::vector<double> z_vec(double v) const {
    std::vector<double> out(d, 0.0);
    out[0] = z(v);
    return out;
  }

  /// Throws ValidityViolated if the closed form does not solve the eBSDE
  /// driven by this factor model.
  void check_validity(const FactorModel& model) const {
    if (!requires_mu_half_kappa2) return;
    const double k2 = model.kappa_norm2();
    const bool ok = model.drift_kind == DriftKind::OrnsteinUhlenbeck &&
                    std::abs(model.mu - 0.5 * k2) <= 1e-12 * std::max(1.0, model.mu) &&
                    std::abs(std::sqrt(k2) - kappa) <= 1e-12 * std::max(1.0, kappa);
    if (!ok)
      throw Error(ErrorCode::ValidityViolated,
                  name + " closed form needs an OU factor with mu = |kappa|^2 / 2 and |kappa| = " +
                      std::to_string(kappa));
  }
};

enum class ZConvention {
  Markovian,  // z = kappa * y'
  Verbatim,   // z = C_v / (mu + kappa^2/2) * exp(-v^2/2), no kappa factor
};

/// Example with driver C_v v exp(-v^2/2) on an OU(mu) factor: lambda = 0.
inline OracleSolution example1_solution(double c_v, double mu, double kappa,
                                        ZConvention conv = ZConvention::Markovian) {
  require(mu > 0.0, ErrorCode::InvalidArgument, "mu must be positive");
  const double a = c_v / (mu + 0.5 * kappa * kappa);
  const double zscale = conv == ZConvention::Markovian ? kappa * a : a;
  OracleSolution s;
  s.y = [a](double v) { return a * std::sqrt(2.0 * std::numbers::pi) * normal_cdf(v); };
  s.z = [zscale](double v) { return zscale * std::exp(-0.5 * v * v); };
  s.lambda = 0.0;
  s.kappa = kappa;
  s.name = "example1";
  return s;
}

namespace detail {

// exp(v^2/2) * (1 - Phi(v)) for v >= 0, stable for large v.
inline double scaled_upper_tail(double v) {
  if (v < 25.0) return 0.5 * std::exp(0.5 * v * v) * std::erfc(v / std::numbers::sqrt2);
  const double inv2 = 1.0 / (v * v);
  return (1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2) / (v * std::sqrt(2.0 * std::numbers::pi));
}

// Cached antiderivative of an even-symmetric derivative on [0, 8], cubic
// Hermite between nodes using the exact derivative.
class HermiteCache {
 public:
  HermiteCache(std::function<double(double)> deriv, double x_max, double step)
      : deriv_(std::move(deriv)), step_(step), x_max_(x_max) {
    const std::size_t n = static_cast<std::size_t>(std::llround(x_max / step));
    val_.assign(n + 1, 0.0);
    der_.assign(n + 1, 0.0);
    der_[0] = deriv_(0.0);
    for (std::size_t i = 1; i <= n; ++i) {
      const double a = step * static_cast<double>(i - 1);
      const double b = step * static_cast<double>(i);
      auto q = adaptive_simpson(deriv_, a, b, 1e-16, 8);
      val_[i] = val_[i - 1] + q.value;
      der_[i] = deriv_(b);
    }
  }

  // integral of deriv over [0, x], x >= 0
  double operator()(double x) const {
    if (x >= x_max_) {
      auto q = adaptive_simpson(deriv_, x_max_, x, 1e-12, 20);
      return val_.back() + q.value;
    }
    const double pos = x / step_;
    std::size_t i = static_cast<std::size_t>(pos);
    if (i >= val_.size() - 1) i = val_.size() - 2;
    const double t = pos - static_cast<double>(i);
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * val_[i] + h10 * step_ * der_[i] + h01 * val_[i + 1] + h11 * step_ * der_[i + 1];
  }

 private:
  std::function<double(double)> deriv_;
  double step_, x_max_;
  std::vector<double> val_, der_;
};

}  // namespace detail

/// Example with driver C_v |v| exp(-v^2/2), valid only for mu = kappa^2/2.
/// z is odd and y is even with y(0) = 0.
inline OracleSolution example2_solution(double c_v, double kappa) {
  require(kappa > 0.0, ErrorCode::InvalidArgument, "kappa must be positive");
  const double a1 = c_v / (kappa * kappa);
  const double a2 = 2.0 * a1;
  // z(v) for v >= 0
  auto z_pos = [=](double v) {
    return kappa * (a1 * std::exp(-0.5 * v * v) - a2 * detail::scaled_upper_tail(v));
  };
  auto cache = std::make_shared<detail::HermiteCache>([=](double v) { return z_pos(v) / kappa; }, 8.0, 1e-3);
  OracleSolution s;
  s.z = [z_pos](double v) { return v >= 0.0 ? z_pos(v) : -z_pos(-v); };
  s.y = [cache](double v) { return (*cache)(std::abs(v)); };
  s.lambda = c_v / std::sqrt(2.0 * std::numbers::pi);
  s.requires_mu_half_kappa2 = true;
  s.kappa = kappa;
  s.name = "example2";
  return s;
}

/// Power utility with Full constraint set and a constant premium vector:
/// z = 0, y = 0, lambda = F(v, 0).
inline OracleSolution constant_premium_power_solution(double delta, const std::vector<double>& theta) {
  require(delta > 0.0 && delta < 1.0, ErrorCode::InvalidArgument, "delta must lie in (0,1)");
  OracleSolution s;
  s.y = [](double) { return 0.0; };
  s.z = [](double) { return 0.0; };
  s.lambda = delta / (2.0 * (1.0 - delta)) * norm2(theta.data(), theta.size());
  s.d = theta.size();
  s.name = "constant-premium-power";
  return s;
}

}  // namespace ebsde
