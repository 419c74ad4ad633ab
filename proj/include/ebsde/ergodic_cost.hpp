#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ebsde/drivers.hpp"
#include "ebsde/error.hpp"
#include "ebsde/parallel.hpp"
#include "ebsde/rng.hpp"
#include "ebsde/sde.hpp"

namespace ebsde {

enum class LambdaMethod { Ratio, LinearExp, ColeHopf };

inline std::string method_name(LambdaMethod m) {
  switch (m) {
    case LambdaMethod::Ratio: return "ratio";
    case LambdaMethod::LinearExp: return "linear-exp";
    case LambdaMethod::ColeHopf: return "colehopf";
  }
  return "?";
}

struct LambdaEstimate {
  double value = 0.0;
  double variance = 0.0;   // across repetitions (0 for a single run)
  double std_error = 0.0;  // within-run Monte Carlo standard error
  std::size_t n_paths = 0;
  std::size_t reps = 1;
  double h = 0.0;
  LambdaMethod method = LambdaMethod::Ratio;
  double runtime = 0.0;    // seconds, informational only
  double mean_tau = 0.0;
  bool within_bound = true;
  std::vector<double> rep_values;
};

/// A source of paths: either a stored bundle or an on-the-fly stream. Both
/// visit path j with the same increments, so estimators agree bitwise.
struct PathSource {
  std::size_t n_paths = 0;
  double h = 0.0;
  std::size_t threads = 1;
  std::function<void(const std::function<void(std::size_t, const PathView&)>&)> visit;

  static PathSource from_bundle(const PathBundle& b, std::size_t threads = 1) {
    PathSource s;
    s.n_paths = b.n_paths();
    s.h = b.h();
    s.threads = threads;
    s.visit = [&b, threads](const std::function<void(std::size_t, const PathView&)>& fn) {
      parallel_for(b.n_paths(), threads, [&](std::size_t j) { fn(j, b.view(j)); });
    };
    return s;
  }

  static PathSource stream(const FactorModel& model, const TimeGrid& grid, std::size_t n_paths,
                           std::uint64_t seed, std::size_t threads = 1) {
    PathSource s;
    s.n_paths = n_paths;
    s.h = grid.h;
    s.threads = threads;
    s.visit = [model, grid, n_paths, seed, threads](const std::function<void(std::size_t, const PathView&)>& fn) {
      for_each_path(model, grid, n_paths, seed, threads, fn);
    };
    return s;
  }
};

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace detail

/// Pooled ratio sum_j sum_i h F(V_i) / sum_j tau_j for z-free drivers.
inline LambdaEstimate lambda_ratio(const Driver& drv, const PathSource& src) {
  if (drv.depends_on_z())
    throw Error(ErrorCode::DriverDependsOnZ,
                "ratio estimator needs a z-free driver, got " + driver_kind_name(drv.kind));
  const auto t0 = std::chrono::steady_clock::now();
  const double h = src.h;
  std::vector<double> sum_f(src.n_paths), tau(src.n_paths);
  const Vec zero{};
  src.visit([&](std::size_t j, const PathView& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.n_ret; ++i) s += h * drv.eval_raw(p.v[i], zero.data());
    sum_f[j] = s;
    tau[j] = h * static_cast<double>(p.n_ret);
  });
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < src.n_paths; ++j) {
    num += sum_f[j];
    den += tau[j];
  }
  LambdaEstimate e;
  e.value = num / den;
  const double m = static_cast<double>(src.n_paths);
  if (src.n_paths > 1) {
    double r2 = 0.0;
    for (std::size_t j = 0; j < src.n_paths; ++j) {
      const double r = sum_f[j] - e.value * tau[j];
      r2 += r * r;
    }
    const double mean_tau = den / m;
    e.std_error = std::sqrt(r2 / (m * (m - 1.0))) / mean_tau;
  }
  e.n_paths = src.n_paths;
  e.h = h;
  e.method = LambdaMethod::Ratio;
  e.mean_tau = den / m;
  e.runtime = detail::seconds_since(t0);
  return e;
}

struct LinearExpSample {
  double gamma_tau = 1.0;    // Gamma_{0,tau}
  double int_gamma_theta2 = 0.0;  // sum h Gamma_k |theta_k|^2
  double int_gamma = 0.0;    // sum h Gamma_k
  double min_gamma = 1.0;
};

/// Linear representation for the unconstrained exponential case:
/// lambda = (E[y0 Gamma_tau] - 1/2 E[int Gamma |theta|^2] - y0) / E[int Gamma],
/// with Gamma simulated by exact log increments.
inline LambdaEstimate lambda_linear_exp(const RiskPremiumSpec& theta, std::size_t d, const PathSource& src,
                                        double y0, std::vector<LinearExpSample>* samples_out = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const double h = src.h;
  std::vector<LinearExpSample> samples(src.n_paths);
  src.visit([&](std::size_t j, const PathView& p) {
    LinearExpSample s;
    double g = 1.0;
    Vec th{};
    for (std::size_t k = 0; k < p.n_ret; ++k) {
      theta.eval(p.v[k], th.data(), d);
      const double t2 = norm2(th.data(), d);
      s.int_gamma_theta2 += h * g * t2;
      s.int_gamma += h * g;
      g *= std::exp(-dot(th.data(), p.dw_at(k), d) - 0.5 * t2 * h);
      s.min_gamma = std::min(s.min_gamma, g);
    }
    s.gamma_tau = g;
    samples[j] = s;
  });
  double mg = 0.0, mi1 = 0.0, mi2 = 0.0;
  for (const auto& s : samples) {
    mg += s.gamma_tau;
    mi1 += s.int_gamma_theta2;
    mi2 += s.int_gamma;
  }
  const double m = static_cast<double>(src.n_paths);
  mg /= m;
  mi1 /= m;
  mi2 /= m;
  LambdaEstimate e;
  e.value = (y0 * mg - 0.5 * mi1 - y0) / mi2;
  if (src.n_paths > 1) {
    double r2 = 0.0;
    for (const auto& s : samples) {
      const double r = (y0 * s.gamma_tau - 0.5 * s.int_gamma_theta2 - y0) - e.value * s.int_gamma;
      r2 += r * r;
    }
    e.std_error = std::sqrt(r2 / (m * (m - 1.0))) / mi2;
  }
  e.n_paths = src.n_paths;
  e.h = h;
  e.method = LambdaMethod::LinearExp;
  e.runtime = detail::seconds_since(t0);
  if (samples_out) *samples_out = std::move(samples);
  return e;
}

/// Per-path output of the Cole-Hopf simulation at lambda = 0.
struct ColeHopfSample {
  double log_gamma0 = 0.0;
  double tau = 0.0;
};

struct ColeHopfProblem {
  double beta = 1.0;
  std::function<double(double)> l;
  std::function<void(double, double*)> a;  // writes a(v) into a d-vector
  std::size_t d = 1;
};

/// Simulates log Gamma_{0,tau}(0) per path. Gamma solves
/// dGamma = Gamma (beta l(V) dt + a(V) . dW), so each exact log increment is
/// beta l h - |a|^2 h / 2 + a . dW.
inline std::vector<ColeHopfSample> colehopf_samples(const ColeHopfProblem& pb, const PathSource& src) {
  const double h = src.h;
  std::vector<ColeHopfSample> out(src.n_paths);
  src.visit([&](std::size_t j, const PathView& p) {
    double lg = 0.0;
    Vec av{};
    for (std::size_t k = 0; k < p.n_ret; ++k) {
      const double v = p.v[k];
      pb.a(v, av.data());
      lg += pb.beta * pb.l(v) * h - 0.5 * norm2(av.data(), pb.d) * h + dot(av.data(), p.dw_at(k), pb.d);
    }
    out[j] = {lg, h * static_cast<double>(p.n_ret)};
  });
  return out;
}

/// log mean_j Gamma_j(lambda) with Gamma_j(lambda) = Gamma_j(0) exp(-beta lambda tau_j),
/// and its derivative in lambda. Computed by a stable log-sum-exp.
inline std::pair<double, double> log_mean_gamma(const std::vector<ColeHopfSample>& s, double beta, double lambda) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& x : s) mx = std::max(mx, x.log_gamma0 - beta * lambda * x.tau);
  double sum = 0.0, sum_tau = 0.0;
  for (const auto& x : s) {
    const double w = std::exp(x.log_gamma0 - beta * lambda * x.tau - mx);
    sum += w;
    sum_tau += w * x.tau;
  }
  const double g = mx + std::log(sum / static_cast<double>(s.size()));
  return {g, -beta * sum_tau / sum};
}

/// Mean of Gamma(lambda) over the samples and its standard error.
inline std::pair<double, double> mean_gamma(const std::vector<ColeHopfSample>& s, double beta, double lambda) {
  const double m = static_cast<double>(s.size());
  double mean = 0.0;
  for (const auto& x : s) mean += std::exp(x.log_gamma0 - beta * lambda * x.tau);
  mean /= m;
  double var = 0.0;
  for (const auto& x : s) {
    const double r = std::exp(x.log_gamma0 - beta * lambda * x.tau) - mean;
    var += r * r;
  }
  var /= std::max(1.0, m - 1.0);
  return {mean, std::sqrt(var / m)};
}

enum class RootMethod { Newton, Bisection };

/// Root of mean Gamma(lambda) = 1 on [-K, K]. Newton starts at 0 and falls
/// back to bisection after 50 iterations or a vanishing derivative.
inline double colehopf_root(const std::vector<ColeHopfSample>& s, double beta, double K,
                            RootMethod method = RootMethod::Newton) {
  require(!s.empty(), ErrorCode::InvalidArgument, "no samples");
  const double g_lo = log_mean_gamma(s, beta, -K).first;
  const double g_hi = log_mean_gamma(s, beta, K).first;
  if (g_lo * g_hi > 0.0)
    throw Error(ErrorCode::RootNotBracketed, "mean Gamma - 1 has the same sign at -K and K (K=" +
                                                 std::to_string(K) + ")");
  if (g_lo == 0.0) return -K;
  if (g_hi == 0.0) return K;
  double lo = -K, hi = K;
  const bool increasing = g_hi > 0.0;
  auto shrink = [&](double x, double g) {
    if ((g > 0.0) == increasing)
      hi = x;
    else
      lo = x;
  };
  if (method == RootMethod::Newton) {
    double x = 0.0;
    for (int it = 0; it < 50; ++it) {
      auto [g, dg] = log_mean_gamma(s, beta, x);
      if (g == 0.0) return x;
      shrink(x, g);
      if (std::abs(dg) < 1e-14) break;
      double next = x - g / dg;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
      x = next;
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = log_mean_gamma(s, beta, mid).first;
    if (g == 0.0) return mid;
    shrink(mid, g);
  }
  return 0.5 * (lo + hi);
}

inline LambdaEstimate lambda_colehopf_general(const ColeHopfProblem& pb, const PathSource& src, double K,
                                              RootMethod method = RootMethod::Newton,
                                              std::vector<ColeHopfSample>* samples_out = nullptr) {
  require(pb.beta != 0.0, ErrorCode::InvalidArgument, "beta must be nonzero");
  const auto t0 = std::chrono::steady_clock::now();
  auto samples = colehopf_samples(pb, src);
  LambdaEstimate e;
  e.value = colehopf_root(samples, pb.beta, K, method);
  // delta method: d lambda = -(Gamma - 1) / (d mean Gamma / d lambda)
  const double se = mean_gamma(samples, pb.beta, e.value).second;
  double slope = 0.0;
  for (const auto& x : samples) slope += pb.beta * x.tau * std::exp(x.log_gamma0 - pb.beta * e.value * x.tau);
  slope /= static_cast<double>(samples.size());
  e.std_error = slope > 0.0 ? se / slope : 0.0;
  double tau = 0.0;
  for (const auto& x : samples) tau += x.tau;
  e.mean_tau = tau / static_cast<double>(samples.size());
  e.n_paths = src.n_paths;
  e.h = src.h;
  e.method = LambdaMethod::ColeHopf;
  e.within_bound = std::abs(e.value) <= K;
  e.runtime = detail::seconds_since(t0);
  if (samples_out) *samples_out = std::move(samples);
  return e;
}

/// Power-utility specialization: beta = 1/(1-delta),
/// l = delta |theta|^2 / (2(1-delta)), a = delta theta / (1-delta).
inline ColeHopfProblem power_colehopf_problem(double delta, const RiskPremiumSpec& theta, std::size_t d) {
  require(delta > 0.0 && delta < 1.0, ErrorCode::InvalidArgument, "delta must lie in (0,1)");
  ColeHopfProblem pb;
  pb.beta = 1.0 / (1.0 - delta);
  pb.d = d;
  pb.l = [delta, theta, d](double v) {
    Vec th{};
    theta.eval(v, th.data(), d);
    return delta / (2.0 * (1.0 - delta)) * norm2(th.data(), d);
  };
  pb.a = [delta, theta, d](double v, double* out) {
    theta.eval(v, out, d);
    for (std::size_t i = 0; i < d; ++i) out[i] = delta * out[i] / (1.0 - delta);
  };
  return pb;
}

inline LambdaEstimate lambda_colehopf_power(double delta, const RiskPremiumSpec& theta, std::size_t d,
                                            const PathSource& src, double K,
                                            RootMethod method = RootMethod::Newton,
                                            std::vector<ColeHopfSample>* samples_out = nullptr) {
  return lambda_colehopf_general(power_colehopf_problem(delta, theta, d), src, K, method, samples_out);
}

/// Runs `reps` independent estimates (seed derived per repetition) and
/// aggregates mean and unbiased variance of the values.
inline LambdaEstimate repeat_estimate(std::size_t reps, std::uint64_t seed,
                                      const std::function<LambdaEstimate(std::uint64_t)>& one) {
  require(reps >= 1, ErrorCode::InvalidArgument, "reps must be at least 1");
  const auto t0 = std::chrono::steady_clock::now();
  LambdaEstimate agg;
  std::vector<double> vals;
  for (std::size_t r = 0; r < reps; ++r) {
    LambdaEstimate e = one(derive_seed(seed, 1000 + r));
    if (r == 0) agg = e;
    agg.within_bound = agg.within_bound && e.within_bound;
    vals.push_back(e.value);
  }
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(reps);
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  agg.value = mean;
  agg.variance = reps > 1 ? var / static_cast<double>(reps - 1) : 0.0;
  agg.reps = reps;
  agg.rep_values = std::move(vals);
  agg.runtime = detail::seconds_since(t0);
  return agg;
}

}  // namespace ebsde
