#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ebsde/error.hpp"
#include "ebsde/sde.hpp"

namespace ebsde {

// Brownian dimension is tiny in every experiment; a fixed upper bound keeps
// the per-step driver evaluations free of allocation.
inline constexpr std::size_t kMaxDim = 8;
using Vec = std::array<double, kMaxDim>;

inline double dot(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}
inline double norm2(const double* a, std::size_t d) { return dot(a, a, d); }

enum class SetKind { Full, Box, AxisSubspace };

struct ConvexSet {
  SetKind kind = SetKind::Full;
  std::vector<double> lo, hi;      // Box
  std::vector<std::size_t> free;   // AxisSubspace, zero-based coordinates

  static ConvexSet full() { return {}; }
  static ConvexSet box(std::vector<double> lo, std::vector<double> hi) {
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(i < hi.size() && lo[i] <= hi[i], ErrorCode::InvalidArgument, "box needs lo <= hi");
    return {SetKind::Box, std::move(lo), std::move(hi), {}};
  }
  static ConvexSet axis_subspace(std::vector<std::size_t> free) {
    return {SetKind::AxisSubspace, {}, {}, std::move(free)};
  }

  bool contains_origin() const {
    if (kind != SetKind::Box) return true;
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (lo[i] > 0.0 || hi[i] < 0.0) return false;
    return true;
  }

  void project(const double* x, double* out, std::size_t d) const {
    switch (kind) {
      case SetKind::Full:
        std::copy(x, x + d, out);
        break;
      case SetKind::Box:
        require(lo.size() == d, ErrorCode::InvalidArgument, "box dimension mismatch");
        for (std::size_t i = 0; i < d; ++i) out[i] = std::clamp(x[i], lo[i], hi[i]);
        break;
      case SetKind::AxisSubspace:
        for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
        for (std::size_t i : free)
          if (i < d) out[i] = x[i];
        break;
    }
  }

  std::vector<double> project(std::span<const double> x) const {
    std::vector<double> out(x.size());
    project(x.data(), out.data(), x.size());
    return out;
  }

  double dist2(const double* x, std::size_t d) const {
    if (kind == SetKind::Full) return 0.0;
    Vec p{};
    project(x, p.data(), d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (x[i] - p[i]) * (x[i] - p[i]);
    return s;
  }
  double dist2(std::span<const double> x) const { return dist2(x.data(), x.size()); }
};

enum class PremiumKind { TruncatedLinear, Constant };

struct RiskPremiumSpec {
  PremiumKind kind = PremiumKind::TruncatedLinear;
  double theta = 0.0;
  double b = 0.0;
  std::vector<double> value;  // Constant

  static RiskPremiumSpec truncated_linear(double theta, double b) {
    return {PremiumKind::TruncatedLinear, theta, b, {}};
  }
  static RiskPremiumSpec constant(std::vector<double> v) {
    return {PremiumKind::Constant, 0.0, 0.0, std::move(v)};
  }

  void eval(double v, double* out, std::size_t d) const {
    if (kind == PremiumKind::TruncatedLinear) {
      for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
      if (d > 0) out[0] = std::clamp(theta * v, -b, b);
    } else {
      for (std::size_t i = 0; i < d; ++i) out[i] = i < value.size() ? value[i] : 0.0;
    }
  }

  double lipschitz() const { return kind == PremiumKind::TruncatedLinear ? std::abs(theta) : 0.0; }
  double sup_norm() const {
    if (kind == PremiumKind::TruncatedLinear) return std::abs(b);
    return std::sqrt(norm2(value.data(), value.size()));
  }
};

inline std::vector<double> theta_eval(const RiskPremiumSpec& spec, double v, std::size_t d = 1) {
  std::vector<double> out(d);
  spec.eval(v, out.data(), d);
  return out;
}

enum class DriverKind { Log, Exp, Power, Example1, Example2, Constant };

inline std::string driver_kind_name(DriverKind k) {
  switch (k) {
    case DriverKind::Log: return "log";
    case DriverKind::Exp: return "exp";
    case DriverKind::Power: return "power";
    case DriverKind::Example1: return "example1";
    case DriverKind::Example2: return "example2";
    case DriverKind::Constant: return "constant";
  }
  return "?";
}

struct DriverBounds {
  double K = 0.0;
  double Z_max = 0.0;
  double C_v = 0.0;
  double C_z = 0.0;
};

struct Driver {
  DriverKind kind = DriverKind::Example1;
  std::size_t d = 1;
  double gamma = 0.5;  // Exp
  double delta = 0.5;  // Power
  double c_v = 1.0;    // Example1 / Example2 amplitude
  double c = 0.0;      // Constant
  ConvexSet pi;
  RiskPremiumSpec theta;
  bool truncate = false;
  double z_max = 0.0;  // radius used when truncate is on

  static Driver log_utility(RiskPremiumSpec th, ConvexSet set = {}, std::size_t d = 1) {
    Driver f;
    f.kind = DriverKind::Log;
    f.theta = std::move(th);
    f.pi = std::move(set);
    f.d = d;
    return f;
  }
  static Driver exp_utility(double gamma, RiskPremiumSpec th, ConvexSet set = {}, std::size_t d = 1) {
    require(gamma > 0.0 && gamma < 1.0, ErrorCode::InvalidArgument, "gamma must lie in (0,1)");
    Driver f = log_utility(std::move(th), std::move(set), d);
    f.kind = DriverKind::Exp;
    f.gamma = gamma;
    return f;
  }
  static Driver power_utility(double delta, RiskPremiumSpec th, ConvexSet set = {}, std::size_t d = 1) {
    require(delta > 0.0 && delta < 1.0, ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    Driver f = log_utility(std::move(th), std::move(set), d);
    f.kind = DriverKind::Power;
    f.delta = delta;
    return f;
  }
  static Driver example1(double c_v, std::size_t d = 1) {
    Driver f;
    f.kind = DriverKind::Example1;
    f.c_v = c_v;
    f.d = d;
    return f;
  }
  static Driver example2(double c_v, std::size_t d = 1) {
    Driver f = example1(c_v, d);
    f.kind = DriverKind::Example2;
    return f;
  }
  static Driver constant(double c, std::size_t d = 1) {
    Driver f;
    f.kind = DriverKind::Constant;
    f.c = c;
    f.d = d;
    return f;
  }

  bool depends_on_z() const { return kind == DriverKind::Exp || kind == DriverKind::Power; }

  void validate() const {
    require(d >= 1 && d <= kMaxDim, ErrorCode::InvalidArgument, "driver dimension must be in [1, 8]");
    if (kind == DriverKind::Exp)
      require(gamma > 0.0 && gamma < 1.0, ErrorCode::InvalidArgument, "gamma must lie in (0,1)");
    if (kind == DriverKind::Power)
      require(delta > 0.0 && delta < 1.0, ErrorCode::InvalidArgument, "delta must lie in (0,1)");
  }

  /// F(v, z) exactly as written, without truncation.
  double eval_raw(double v, const double* z) const {
    switch (kind) {
      case DriverKind::Example1: return c_v * v * std::exp(-0.5 * v * v);
      case DriverKind::Example2: return c_v * std::abs(v) * std::exp(-0.5 * v * v);
      case DriverKind::Constant: return c;
      default: break;
    }
    Vec th{};
    theta.eval(v, th.data(), d);
    if (kind == DriverKind::Log) return -0.5 * pi.dist2(th.data(), d) + 0.5 * norm2(th.data(), d);
    Vec s{};
    for (std::size_t i = 0; i < d; ++i) s[i] = z[i] + th[i];
    const double zz = norm2(z, d);
    const double ss = norm2(s.data(), d);
    if (kind == DriverKind::Exp) {
      double dist = 0.0;
      if (pi.kind != SetKind::Full) {
        Vec x{};
        for (std::size_t i = 0; i < d; ++i) x[i] = s[i] / gamma;
        dist = pi.dist2(x.data(), d);
      }
      return 0.5 * gamma * gamma * dist - 0.5 * ss + 0.5 * zz;
    }
    double dist = 0.0;
    if (pi.kind != SetKind::Full) {
      Vec x{};
      for (std::size_t i = 0; i < d; ++i) x[i] = s[i] / (1.0 - delta);
      dist = pi.dist2(x.data(), d);
    }
    return delta * (delta - 1.0) / 2.0 * dist + delta / (2.0 * (1.0 - delta)) * ss + 0.5 * zz;
  }

  /// Gradient of eval_raw in z.
  void grad_raw(double v, const double* z, double* g) const {
    if (!depends_on_z()) {
      for (std::size_t i = 0; i < d; ++i) g[i] = 0.0;
      return;
    }
    Vec th{};
    theta.eval(v, th.data(), d);
    Vec x{}, px{};
    if (kind == DriverKind::Exp) {
      for (std::size_t i = 0; i < d; ++i) x[i] = (z[i] + th[i]) / gamma;
      pi.project(x.data(), px.data(), d);
      for (std::size_t i = 0; i < d; ++i) g[i] = gamma * (x[i] - px[i]) - th[i];
      return;
    }
    for (std::size_t i = 0; i < d; ++i) x[i] = (z[i] + th[i]) / (1.0 - delta);
    pi.project(x.data(), px.data(), d);
    for (std::size_t i = 0; i < d; ++i)
      g[i] = -delta * (x[i] - px[i]) + delta / (1.0 - delta) * (th[i] + z[i]) + z[i];
  }

  /// F evaluated at the (optionally truncated) z.
  double eval(double v, const double* z) const {
    if (!truncate || !depends_on_z()) return eval_raw(v, z);
    Vec t{};
    truncate_into(z, t.data());
    return eval_raw(v, t.data());
  }
  double eval(double v, std::span<const double> z) const { return eval(v, z.data()); }

  /// Gradient of eval in z, chaining through the ball projection when on.
  void grad_z(double v, const double* z, double* g) const {
    if (!truncate || !depends_on_z()) {
      grad_raw(v, z, g);
      return;
    }
    const double n = std::sqrt(norm2(z, d));
    if (n <= z_max) {
      grad_raw(v, z, g);
      return;
    }
    Vec t{}, gt{};
    for (std::size_t i = 0; i < d; ++i) t[i] = z[i] * z_max / n;
    grad_raw(v, t.data(), gt.data());
    // Jacobian of z -> R z/|z| is (R/|z|)(I - z z^T/|z|^2), symmetric.
    const double zg = dot(z, gt.data(), d) / (n * n);
    for (std::size_t i = 0; i < d; ++i) g[i] = z_max / n * (gt[i] - zg * z[i]);
  }

  void truncate_into(const double* z, double* out) const {
    const double n = std::sqrt(norm2(z, d));
    const double scale = n > z_max && n > 0.0 ? z_max / n : 1.0;
    for (std::size_t i = 0; i < d; ++i) out[i] = z[i] * scale;
  }
};

inline double driver_eval(const Driver& drv, double v, std::span<const double> z) {
  return drv.eval(v, z.data());
}

/// Projection on the centered ball of radius z_max.
inline std::vector<double> truncate_z(double z_max, std::span<const double> z) {
  const double n = std::sqrt(norm2(z.data(), z.size()));
  std::vector<double> out(z.begin(), z.end());
  if (n > z_max && n > 0.0)
    for (double& x : out) x *= z_max / n;
  return out;
}

/// sup |F(v,0)| on the mesh v in [-20, 20], step 1e-3.
inline double driver_k_numeric(const Driver& drv) {
  Vec zero{};
  double k = 0.0;
  for (int i = -20000; i <= 20000; ++i) {
    const double v = i * 1e-3;
    k = std::max(k, std::abs(drv.eval_raw(v, zero.data())));
  }
  return k;
}

/// True when the constraint set leaves every coordinate in which theta can be
/// nonzero unconstrained. The dist^2 term then never depends on v and the
/// growth constants reduce to those of the unconstrained case.
inline bool premium_unconstrained(const Driver& drv) {
  if (drv.pi.kind == SetKind::Full) return true;
  if (drv.pi.kind != SetKind::AxisSubspace) return false;
  auto is_free = [&](std::size_t i) {
    return std::find(drv.pi.free.begin(), drv.pi.free.end(), i) != drv.pi.free.end();
  };
  if (drv.theta.kind == PremiumKind::TruncatedLinear) return is_free(0);
  for (std::size_t i = 0; i < drv.theta.value.size(); ++i)
    if (drv.theta.value[i] != 0.0 && !is_free(i)) return false;
  return true;
}

/// Closed-form sup |F(v,0)| where one exists (Full constraint set or the
/// benchmark drivers); negative when no closed form applies.
inline double driver_k_analytic(const Driver& drv) {
  const double b = drv.theta.sup_norm();
  switch (drv.kind) {
    case DriverKind::Example1:
    case DriverKind::Example2: return std::abs(drv.c_v) / std::sqrt(std::exp(1.0));
    case DriverKind::Constant: return std::abs(drv.c);
    case DriverKind::Log:
    case DriverKind::Exp:
      return premium_unconstrained(drv) ? 0.5 * b * b : -1.0;
    case DriverKind::Power:
      return premium_unconstrained(drv) ? b * b * drv.delta / (2.0 * (1.0 - drv.delta)) : -1.0;
  }
  return -1.0;
}

/// Lipschitz constants (C_v, C_z) of the growth assumption for this driver,
/// derived from the sup-norm b and Lipschitz constant L of theta.
inline std::pair<double, double> driver_lipschitz(const Driver& drv) {
  const double b = drv.theta.sup_norm();
  const double L = drv.theta.lipschitz();
  const bool full = premium_unconstrained(drv);
  const double m = std::max(b, 1.0);
  switch (drv.kind) {
    case DriverKind::Example1:
    case DriverKind::Example2: return {std::abs(drv.c_v), 0.0};
    case DriverKind::Constant: return {0.0, 0.0};
    case DriverKind::Log: return {(full ? 1.0 : 2.0) * b * L, 0.0};
    case DriverKind::Exp:
      if (drv.pi.kind == SetKind::Full) return {L * m, b};
      if (full) return {L * m, std::max(b, 0.5)};
      return {2.0 * L * m, std::max(2.0 * b, 0.5)};
    case DriverKind::Power: {
      const double dl = drv.delta, q = 1.0 - dl;
      if (full) return {dl * L * m / q, std::max(dl * b / q, 0.5 / q)};
      return {2.0 * dl * L * m / q, std::max(2.0 * dl * b / q, (1.0 + dl) / (2.0 * q))};
    }
  }
  return {0.0, 0.0};
}

inline double z_max_bound(double kappa_norm, double c_v, double c_mu) {
  if (!(c_v < c_mu))
    throw Error(ErrorCode::BoundUnavailable, "C_v=" + std::to_string(c_v) + " is not below C_mu=" +
                                                 std::to_string(c_mu));
  return kappa_norm * c_v / (c_mu - c_v);
}

inline DriverBounds bounds(const Driver& drv, const FactorModel& model) {
  DriverBounds out;
  auto [cv, cz] = driver_lipschitz(drv);
  out.C_v = cv;
  out.C_z = cz;
  out.K = driver_k_numeric(drv);
  out.Z_max = z_max_bound(model.kappa_norm(), cv, model.c_mu());
  return out;
}

}  // namespace ebsde
