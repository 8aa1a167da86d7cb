#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <vector>

#include "pstein/errors.hpp"

namespace pstein {

inline constexpr double quad_rel_tol = 1e-10;

//! Adaptive Gauss-Kronrod integration of f over (a, b); either endpoint may
//! be infinite (the backend substitutes the interval onto a finite one).
template <class F>
double integrate(F&& f, double a, double b, double tol = quad_rel_tol,
                 double* err_out = nullptr) {
  if (a == b) {
    if (err_out) *err_out = 0.0;
    return 0.0;
  }
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, /*max_depth=*/15, tol, &err);
  if (!std::isfinite(v)) throw config_error("quadrature did not converge to a finite value");
  if (err_out) *err_out = err;
  return sign * v;
}

//! Integrate with forced subdivision at interior breakpoints (kinks or
//! jumps of the integrand, e.g. indicator thresholds).
template <class F>
double integrate_split(F&& f, double a, double b, std::initializer_list<double> breaks,
                       double tol = quad_rel_tol) {
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  std::vector<double> pts{a};
  for (double s : breaks)
    if (s > a && s < b) pts.push_back(s);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) acc += integrate(f, pts[i], pts[i + 1], tol);
  return sign * acc;
}

//! Central finite difference of order `order` (1..4) with 5-point stencils.
//! Step follows h = eps^(1/(order+2)) * (1 + |x|), which balances truncation
//! and roundoff for the stencil orders used here.
inline double finite_difference(const std::function<double(double)>& f, double x, int order) {
  if (order == 0) return f(x);
  if (order < 0 || order > 4) throw domain_error("finite_difference: order must be in 0..4");
  const double eps = std::numeric_limits<double>::epsilon();
  const double h = std::pow(eps, 1.0 / (order + 2)) * (1.0 + std::abs(x));
  const double f2m = f(x - 2 * h), f1m = f(x - h), f0 = f(x), f1 = f(x + h), f2 = f(x + 2 * h);
  switch (order) {
    case 1: return (f2m - 8 * f1m + 8 * f1 - f2) / (12 * h);
    case 2: return (-f2m + 16 * f1m - 30 * f0 + 16 * f1 - f2) / (12 * h * h);
    case 3: return (-f2m + 2 * f1m - 2 * f1 + f2) / (2 * h * h * h);
    default: return (f2m - 4 * f1m + 6 * f0 - 4 * f1 + f2) / (h * h * h * h);
  }
}

}  // namespace pstein
