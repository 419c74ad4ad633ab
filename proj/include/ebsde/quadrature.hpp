#pragma once

#include <cmath>
#include <functional>

#include "ebsde/error.hpp"

namespace ebsde {

struct QuadratureResult {
  double value = 0.0;
  bool converged = true;
};

namespace detail {

template <class F>
double simpson_recurse(F& f, double a, double b, double fa, double fm, double fb, double whole,
                       double tol, int depth, bool& converged) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) {
    converged = false;
    return left + right + delta / 15.0;
  }
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, converged) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, converged);
}

}  // namespace detail

/// Adaptive Simpson on [a, b] with absolute tolerance `abs_tol`.
template <class F>
QuadratureResult adaptive_simpson(F&& f, double a, double b, double abs_tol, int max_depth = 40) {
  if (a == b) return {0.0, true};
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  bool converged = true;
  const double value = detail::simpson_recurse(f, a, b, fa, fm, fb, whole, abs_tol, max_depth, converged);
  return {value, converged && std::isfinite(value)};
}

/// Adaptive Simpson with a relative tolerance, using a coarse first pass to
/// set the absolute scale.
template <class F>
QuadratureResult adaptive_simpson_rel(F&& f, double a, double b, double rel_tol, int max_depth = 40) {
  const QuadratureResult coarse = adaptive_simpson(f, a, b, std::abs(b - a) * 1e-3, 12);
  const double scale = std::max(std::abs(coarse.value), 1e-300);
  return adaptive_simpson(f, a, b, rel_tol * scale, max_depth);
}

}  // namespace ebsde
