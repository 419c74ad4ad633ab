#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ebsde/error.hpp"
#include "ebsde/parallel.hpp"
#include "ebsde/quadrature.hpp"
#include "ebsde/rng.hpp"

namespace ebsde {

enum class DriftKind { OrnsteinUhlenbeck, CustomAffine };

/// One-dimensional factor dV = mu(V) dt + kappa . dW with an affine,
/// strictly dissipative drift.
struct FactorModel {
  DriftKind drift_kind = DriftKind::OrnsteinUhlenbeck;
  double mu = 1.0;         // OU rate, drift = -mu * v
  double slope = -1.0;     // CustomAffine: drift = slope * v + intercept
  double intercept = 0.0;
  std::vector<double> kappa{1.0};
  double v0 = 0.0;

  static FactorModel ou(double rate, std::vector<double> kappa, double v0 = 0.0) {
    FactorModel m;
    m.drift_kind = DriftKind::OrnsteinUhlenbeck;
    m.mu = rate;
    m.kappa = std::move(kappa);
    m.v0 = v0;
    return m;
  }

  static FactorModel affine(double a, double b, std::vector<double> kappa, double v0 = 0.0) {
    FactorModel m;
    m.drift_kind = DriftKind::CustomAffine;
    m.slope = a;
    m.intercept = b;
    m.kappa = std::move(kappa);
    m.v0 = v0;
    return m;
  }

  std::size_t dims() const { return kappa.size(); }

  double drift(double v) const {
    if (drift_kind == DriftKind::OrnsteinUhlenbeck) return -mu * v;
    return slope * v + intercept;
  }

  double c_mu() const { return drift_kind == DriftKind::OrnsteinUhlenbeck ? mu : -slope; }

  double kappa_norm2() const {
    return std::inner_product(kappa.begin(), kappa.end(), kappa.begin(), 0.0);
  }
  double kappa_norm() const { return std::sqrt(kappa_norm2()); }

  /// Mean of the stationary law (zero of the drift).
  double center() const {
    return drift_kind == DriftKind::OrnsteinUhlenbeck ? 0.0 : -intercept / slope;
  }
  double stationary_sd() const { return kappa_norm() / std::sqrt(2.0 * c_mu()); }

  void validate(bool allow_degenerate = false) const {
    require(!kappa.empty(), ErrorCode::InvalidArgument, "kappa must have at least one coordinate");
    require(std::isfinite(v0), ErrorCode::InvalidArgument, "v0 must be finite");
    if (drift_kind == DriftKind::OrnsteinUhlenbeck)
      require(mu > 0.0, ErrorCode::InvalidArgument, "OU rate mu must be positive");
    else
      require(slope < 0.0, ErrorCode::InvalidArgument, "affine drift slope must be negative");
    if (!allow_degenerate)
      require(kappa_norm2() > 0.0, ErrorCode::InvalidArgument, "kappa kappa^T must be positive");
  }
};

inline double drift_eval(const FactorModel& model, double v) { return model.drift(v); }

struct TimeGrid {
  double h = 0.01;
  double T = 1.0;
  std::size_t max_steps = 0;  // 0 selects 100 * n_T

  std::size_t n_T() const {
    return static_cast<std::size_t>(std::floor(T / h * (1.0 + 1e-12))) + 1;
  }
  std::size_t cap() const { return max_steps ? max_steps : 100 * n_T(); }

  void validate() const {
    require(h > 0.0 && std::isfinite(h), ErrorCode::InvalidArgument, "grid.h must be positive");
    require(T > 0.0 && std::isfinite(T), ErrorCode::InvalidArgument, "grid.T must be positive");
    require(cap() > n_T(), ErrorCode::InvalidArgument, "grid.max_steps must exceed n_T");
  }
};

/// Read-only view of one simulated trajectory: v has n_ret + 1 entries and
/// dw has n_ret * d entries (row k holds the increment over [t_k, t_k+1]).
struct PathView {
  std::span<const double> v;
  std::span<const double> dw;
  std::size_t n_ret = 0;
  std::size_t d = 1;

  const double* dw_at(std::size_t k) const { return dw.data() + k * d; }
};

class PathBundle {
 public:
  PathBundle() = default;

  std::size_t n_paths() const { return n_ret_.size(); }
  std::size_t dims() const { return d_; }
  double h() const { return h_; }
  std::size_t n_T() const { return n_T_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t n_ret(std::size_t j) const { return n_ret_[j]; }
  double tau(std::size_t j) const { return h_ * static_cast<double>(n_ret_[j]); }
  std::size_t max_n_ret() const {
    return n_ret_.empty() ? 0 : *std::max_element(n_ret_.begin(), n_ret_.end());
  }

  PathView view(std::size_t j) const {
    const std::size_t n = n_ret_[j];
    return {std::span<const double>(v_.data() + v_off_[j], n + 1),
            std::span<const double>(dw_.data() + v_off_[j] * d_ - j * d_, n * d_), n, d_};
  }

  std::span<const double> v(std::size_t j) const { return view(j).v; }
  std::span<const double> dw(std::size_t j) const { return view(j).dw; }

  bool operator==(const PathBundle&) const = default;

 private:
  friend PathBundle simulate_paths(const FactorModel&, const TimeGrid&, std::size_t, std::uint64_t,
                                   std::size_t, std::uint64_t);
  std::size_t d_ = 1;
  double h_ = 0.0;
  std::size_t n_T_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> n_ret_;
  std::vector<std::size_t> v_off_;
  std::vector<double> v_;
  std::vector<double> dw_;
};

/// Simulates one Euler path into the caller's buffers and returns its return
/// index. `stream` identifies the path's RNG stream under `seed`.
inline std::size_t simulate_one_path(const FactorModel& model, const TimeGrid& grid, std::uint64_t seed,
                                     std::uint64_t stream, std::vector<double>& v,
                                     std::vector<double>& dw) {
  const std::size_t d = model.dims();
  const std::size_t n_T = grid.n_T();
  const std::size_t cap = grid.cap();
  const double sqrt_h = std::sqrt(grid.h);
  GaussianStream rng(seed, stream);
  v.clear();
  dw.clear();
  v.push_back(model.v0);
  double side = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double vk = v.back();
    double noise = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double w = rng.scaled(sqrt_h);
      dw.push_back(w);
      noise += model.kappa[i] * w;
    }
    const double next = vk + model.drift(vk) * grid.h + noise;
    v.push_back(next);
    const std::size_t n = k + 1;
    if (n == n_T) side = next - model.v0;
    if (n > n_T && side * (next - model.v0) <= 0.0) return n;
    if (n >= cap)
      throw Error(ErrorCode::ReturnTimeCapExceeded,
                  "path " + std::to_string(stream) + " did not cross v0 within " + std::to_string(cap) +
                      " steps (check h, T, max_steps and the drift)");
  }
}

/// Streams n_paths trajectories through fn(j, PathView) without storing the
/// whole bundle. Path j always uses stream first_stream + j.
template <class Fn>
void for_each_path(const FactorModel& model, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                   std::size_t threads, Fn&& fn, std::uint64_t first_stream = 0) {
  model.validate(true);
  grid.validate();
  struct Buffers {
    std::vector<double> v, dw;
  };
  parallel_for_scratch(
      n_paths, threads, [] { return Buffers{}; },
      [&](std::size_t j, Buffers& buf) {
        const std::size_t n = simulate_one_path(model, grid, seed, first_stream + j, buf.v, buf.dw);
        fn(j, PathView{buf.v, buf.dw, n, model.dims()});
      });
}

inline PathBundle simulate_paths(const FactorModel& model, const TimeGrid& grid, std::size_t n_paths,
                                 std::uint64_t seed, std::size_t threads = 1, std::uint64_t first_stream = 0) {
  model.validate(true);
  grid.validate();
  const std::size_t d = model.dims();
  std::vector<std::vector<double>> vs(n_paths), dws(n_paths);
  std::vector<std::size_t> n_ret(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t j) {
    n_ret[j] = simulate_one_path(model, grid, seed, first_stream + j, vs[j], dws[j]);
  });
  PathBundle b;
  b.d_ = d;
  b.h_ = grid.h;
  b.n_T_ = grid.n_T();
  b.seed_ = seed;
  b.n_ret_ = std::move(n_ret);
  b.v_off_.resize(n_paths + 1, 0);
  for (std::size_t j = 0; j < n_paths; ++j) b.v_off_[j + 1] = b.v_off_[j] + b.n_ret_[j] + 1;
  b.v_.reserve(b.v_off_.back());
  b.dw_.reserve((b.v_off_.back() - n_paths) * d);
  for (std::size_t j = 0; j < n_paths; ++j) {
    b.v_.insert(b.v_.end(), vs[j].begin(), vs[j].end());
    b.dw_.insert(b.dw_.end(), dws[j].begin(), dws[j].end());
  }
  return b;
}

/// Smallest observed -(mu(v) - mu(w))(v - w) / |v - w|^2 over random pairs
/// drawn around the stationary law.
inline double check_dissipativity(const FactorModel& model, std::size_t n_samples, std::uint64_t seed) {
  require(n_samples >= 2, ErrorCode::InvalidArgument, "need at least two samples");
  std::mt19937_64 eng(stream_seed(seed, 0));
  const double spread = 10.0 * std::max(1.0, model.kappa_norm() > 0 ? model.stationary_sd() : 1.0);
  std::uniform_real_distribution<double> unif(model.center() - spread, model.center() + spread);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < n_samples; i += 2) {
    const double a = unif(eng);
    const double b = unif(eng);
    if (a == b) continue;
    const double diff = a - b;
    best = std::min(best, -(model.drift(a) - model.drift(b)) * diff / (diff * diff));
  }
  if (best < 0.0)
    throw Error(ErrorCode::DissipativityViolated,
                "sampled pair violates dissipativity, estimate " + std::to_string(best));
  return best;
}

struct MomentBounds {
  double b_plus = 0.0;
  double b_minus = 0.0;
  double argmax_plus = 0.0;
  double argmax_minus = 0.0;
  double gamma_threshold = 0.0;  // 1 / (4 max(B-, B+))
};

namespace detail {

// log s(x) for an affine drift a x + b: -2/|kappa|^2 * (a x^2 / 2 + b x).
struct AffineScale {
  double a, b, k2;
  double log_s(double x) const { return -(a * x * x + 2.0 * b * x) / k2; }
};

// sup_{x >= v0} int_{v0}^x s(u) du * int_x^inf 2 / (k2 s(u)) du, both factors
// rescaled by s(x) so the integrands stay bounded.
inline std::pair<double, double> upper_bound_sup(const AffineScale& sc, double v0, double center, double sd,
                                                 double rel_tol) {
  auto product = [&](double x) {
    const double ls = sc.log_s(x);
    auto left = adaptive_simpson_rel([&](double u) { return std::exp(sc.log_s(u) - ls); }, v0, x, rel_tol);
    const double upper = std::max({x, center, v0}) + 14.0 * sd;
    auto right = adaptive_simpson_rel([&](double u) { return std::exp(ls - sc.log_s(u)); }, x, upper, rel_tol);
    if (!left.converged || !right.converged)
      throw Error(ErrorCode::QuadratureNonConvergent, "scale-function integrals failed to converge near x=" +
                                                          std::to_string(x));
    return left.value * right.value * 2.0 / sc.k2;
  };
  const double hi = std::max(v0, center) + 12.0 * sd;
  const std::size_t mesh = 4000;
  const double step = (hi - v0) / mesh;
  double best = 0.0;
  std::size_t best_i = 0;
  for (std::size_t i = 1; i <= mesh; ++i) {
    const double val = product(v0 + step * static_cast<double>(i));
    if (val > best) {
      best = val;
      best_i = i;
    }
  }
  // golden-section polish inside the bracketing mesh cells
  double lo = v0 + step * static_cast<double>(best_i > 0 ? best_i - 1 : 0);
  double up = v0 + step * static_cast<double>(std::min(best_i + 1, mesh));
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = up - g * (up - lo), d = lo + g * (up - lo);
  double fc = product(c), fd = product(d);
  for (int it = 0; it < 60 && up - lo > 1e-12 * std::max(1.0, std::abs(up)); ++it) {
    if (fc > fd) {
      up = d;
      d = c;
      fd = fc;
      c = up - g * (up - lo);
      fc = product(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + g * (up - lo);
      fd = product(d);
    }
  }
  const double x_star = fc > fd ? c : d;
  const double f_star = std::max(fc, fd);
  if (f_star > best) return {f_star, x_star};
  return {best, v0 + step * static_cast<double>(best_i)};
}

}  // namespace detail

/// Exponential-moment constants of the return time, computed from the scale
/// function by adaptive quadrature (relative tolerance 1e-8) over
/// v0 +- 12 stationary standard deviations.
inline MomentBounds exp_moment_bounds(const FactorModel& model, double v0) {
  model.validate();
  const double a = model.drift_kind == DriftKind::OrnsteinUhlenbeck ? -model.mu : model.slope;
  const double b = model.drift_kind == DriftKind::OrnsteinUhlenbeck ? 0.0 : model.intercept;
  const double k2 = model.kappa_norm2();
  const double sd = model.stationary_sd();
  const double rel = 1e-8;
  MomentBounds out;
  auto [bp, xp] = detail::upper_bound_sup({a, b, k2}, v0, -b / a, sd, rel);
  // B- is B+ of the reflected process -V, whose drift is a v - b.
  auto [bm, xm] = detail::upper_bound_sup({a, -b, k2}, -v0, b / a, sd, rel);
  out.b_plus = bp;
  out.argmax_plus = xp;
  out.b_minus = bm;
  out.argmax_minus = -xm;
  out.gamma_threshold = 1.0 / (4.0 * std::max(bp, bm));
  return out;
}

}  // namespace ebsde
