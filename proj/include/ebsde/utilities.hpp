#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ebsde/drivers.hpp"
#include "ebsde/error.hpp"
#include "ebsde/sde.hpp"
#include "ebsde/solvers.hpp"

namespace ebsde {

enum class UtilityKind { Log, Exp, Power };

/// Forward utility family with its initial utility
///   power: u0(x) = a x^delta / delta
///   exp:   u0(x) = -a exp(-gamma x)
///   log:   u0(x) = ln x + ln a
struct UtilitySpec {
  UtilityKind kind = UtilityKind::Power;
  double delta = 0.5;
  double gamma = 0.5;
  double u0_scale = 1.0;  // a
  double x0 = 1.0;

  void validate() const {
    if (kind == UtilityKind::Power)
      require(delta > 0.0 && delta < 1.0, ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    if (kind == UtilityKind::Exp)
      require(gamma > 0.0 && gamma < 1.0, ErrorCode::InvalidArgument, "gamma must lie in (0,1)");
    require(u0_scale > 0.0, ErrorCode::InvalidArgument, "u0 scale must be positive");
  }

  double u0(double x) const {
    switch (kind) {
      case UtilityKind::Power:
        require(x > 0.0, ErrorCode::DomainError, "power utility needs x > 0");
        return u0_scale * std::pow(x, delta) / delta;
      case UtilityKind::Exp: return -u0_scale * std::exp(-gamma * x);
      case UtilityKind::Log:
        require(x > 0.0, ErrorCode::DomainError, "log utility needs x > 0");
        return std::log(x) + std::log(u0_scale);
    }
    return 0.0;
  }

  /// Y_0 fixed by matching U(0, x0) = u0(x0).
  double y0() const {
    const double u = u0(x0);
    switch (kind) {
      case UtilityKind::Power: return std::log(delta * u) - delta * std::log(x0);
      case UtilityKind::Exp: return std::log(-u) + gamma * x0;
      case UtilityKind::Log: return u - std::log(x0);
    }
    return 0.0;
  }

  /// U(t, x) given f = Ybar_t - lambda_bar t.
  double value(double x, double f) const {
    switch (kind) {
      case UtilityKind::Power:
        if (!(x > 0.0)) throw Error(ErrorCode::DomainError, "power utility needs x > 0");
        return std::pow(x, delta) / delta * std::exp(f);
      case UtilityKind::Exp: return -std::exp(-gamma * x + f);
      case UtilityKind::Log:
        if (!(x > 0.0)) throw Error(ErrorCode::DomainError, "log utility needs x > 0");
        return std::log(x) + f;
    }
    return 0.0;
  }

  /// U(t, x) from the increment g = Ybar_t - Ybar_0 - lambda_bar t, so that
  /// U(0, .) is u0 itself.
  double value_from_increment(double x, double g) const {
    if (kind == UtilityKind::Log) return u0(x) + g;
    return u0(x) * std::exp(g);
  }
};

struct SurfacePoint {
  double t, x, u;
};

/// U(t, x) along one factor path, for the given time indices and wealth grid.
inline std::vector<SurfacePoint> utility_surface(const SolvedEbsde& sol, const UtilitySpec& spec, const PathView& path,
                                                 const std::vector<std::size_t>& t_idx, const std::vector<double>& xs) {
  spec.validate();
  std::size_t last = 0;
  for (auto i : t_idx) last = std::max(last, i);
  require(last <= path.n_ret, ErrorCode::InvalidArgument, "time index beyond the path's return");
  std::vector<double> y, cache;
  solution_y_path(sol, path, last, y, cache);
  std::vector<SurfacePoint> out;
  out.reserve(t_idx.size() * xs.size());
  for (auto i : t_idx) {
    const double t = sol.h * static_cast<double>(i);
    const double g = i == 0 ? 0.0 : y[i] - y[0] - sol.lambda() * t;
    for (double x : xs) out.push_back({t, x, spec.value_from_increment(x, g)});
  }
  return out;
}

/// Optimal proportion (power/log) or amount (exp) for factor value v and a
/// given z: Proj(theta), Proj((z + theta)/gamma), Proj((z + theta)/(1 - delta)).
inline std::vector<double> optimal_strategy(const Driver& drv, const UtilitySpec& spec, double v, const double* z) {
  const std::size_t d = drv.d;
  Vec th{}, x{};
  drv.theta.eval(v, th.data(), d);
  for (std::size_t i = 0; i < d; ++i) {
    switch (spec.kind) {
      case UtilityKind::Log: x[i] = th[i]; break;
      case UtilityKind::Exp: x[i] = (z[i] + th[i]) / spec.gamma; break;
      case UtilityKind::Power: x[i] = (z[i] + th[i]) / (1.0 - spec.delta); break;
    }
  }
  std::vector<double> out(d);
  drv.pi.project(x.data(), out.data(), d);
  return out;
}

/// Strategy from a solved eBSDE at time index i.
inline std::vector<double> optimal_strategy(const SolvedEbsde& sol, const UtilitySpec& spec, std::size_t i, double v) {
  Vec z{};
  std::vector<double> cache(sol.kind == SolverKind::GeBSDE || sol.kind == SolverKind::LAeBSDE
                                ? sol.z_net().cache_size()
                                : 1);
  sol.z_at(i, v, z.data(), cache.data());
  return optimal_strategy(sol.driver, spec, v, z.data());
}

/// One wealth step. Proportional strategies use the exact log-Euler update
/// X exp(pi.theta h - |pi|^2 h / 2 + pi.dW); amount strategies (exp utility)
/// use X + alpha.(theta h + dW).
inline double wealth_step(UtilityKind kind, double x, const double* pi, const double* theta, const double* dw,
                          double h, std::size_t d) {
  if (kind == UtilityKind::Exp) return x + dot(pi, theta, d) * h + dot(pi, dw, d);
  return x * std::exp(dot(pi, theta, d) * h - 0.5 * norm2(pi, d) * h + dot(pi, dw, d));
}

using StrategyFn = std::function<void(std::size_t i, double v, double* pi)>;

/// Wealth along one path up to index n under the strategy.
inline std::vector<double> simulate_wealth(const StrategyFn& strategy, const Driver& drv, UtilityKind kind,
                                           const PathView& path, double x0, double h, std::size_t n) {
  require(kind == UtilityKind::Exp || x0 > 0.0, ErrorCode::DomainError, "x0 must be positive");
  std::vector<double> x(n + 1);
  x[0] = x0;
  Vec pi{}, th{};
  for (std::size_t k = 0; k < n; ++k) {
    strategy(k, path.v[k], pi.data());
    drv.theta.eval(path.v[k], th.data(), drv.d);
    x[k + 1] = wealth_step(kind, x[k], pi.data(), th.data(), path.dw_at(k), h, drv.d);
  }
  return x;
}

inline StrategyFn solved_strategy(const SolvedEbsde& sol, const UtilitySpec& spec) {
  return [&sol, spec](std::size_t i, double v, double* pi) {
    auto s = optimal_strategy(sol, spec, i, v);
    std::copy(s.begin(), s.end(), pi);
  };
}

struct MartingaleReport {
  std::vector<double> t;
  std::vector<double> mean_u;
  std::vector<double> std_err;
  double u0 = 0.0;
  double max_rel_drift = 0.0;
};

/// m(t) = mean_j U(t, X_t^j) on grid times t_i <= T, and the largest
/// relative departure from U(0, x0).
inline MartingaleReport martingale_check(const SolvedEbsde& sol, const UtilitySpec& spec, const PathBundle& paths,
                                         double T, const StrategyFn& strategy) {
  spec.validate();
  const double h = paths.h();
  const std::size_t last = static_cast<std::size_t>(std::floor(T / h * (1.0 + 1e-12)));
  const std::size_t M = paths.n_paths();
  std::vector<double> sum(last + 1, 0.0), sum2(last + 1, 0.0);
  std::vector<double> y, cache;
  for (std::size_t j = 0; j < M; ++j) {
    const PathView p = paths.view(j);
    solution_y_path(sol, p, last, y, cache);
    auto x = simulate_wealth(strategy, sol.driver, spec.kind, p, spec.x0, h, last);
    for (std::size_t i = 0; i <= last; ++i) {
      const double t = h * static_cast<double>(i);
      const double u = spec.value_from_increment(x[i], i == 0 ? 0.0 : y[i] - y[0] - sol.lambda() * t);
      sum[i] += u;
      sum2[i] += u * u;
    }
  }
  MartingaleReport rep;
  rep.u0 = spec.u0(spec.x0);
  const double m = static_cast<double>(M);
  for (std::size_t i = 0; i <= last; ++i) {
    const double mean = sum[i] / m;
    const double var = M > 1 ? std::max(0.0, (sum2[i] - m * mean * mean) / (m - 1.0)) : 0.0;
    rep.t.push_back(h * static_cast<double>(i));
    rep.mean_u.push_back(mean);
    rep.std_err.push_back(std::sqrt(var / m));
    rep.max_rel_drift = std::max(rep.max_rel_drift, std::abs(mean - rep.u0) / std::abs(rep.u0));
  }
  return rep;
}

}  // namespace ebsde
