#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "pstein/errors.hpp"
#include "pstein/pearson.hpp"
#include "pstein/quadrature.hpp"

namespace pstein {

inline constexpr double density_floor = 1e-300;

//! Stationary target given by a drift a and a density p on (lo, hi), with a
//! positive to the left of some interior point and negative to the right,
//! and int a p = 0. The induced squared diffusion is
//!     b(x) = int_lo^x 2 a(y) p(y) dy / p(x),
//! evaluated by adaptive quadrature. Density and drift derivatives may be
//! supplied as closures; otherwise central finite differences are used.
//!
//! The envelope formulas and the exterior Stein branches reference b, b',
//! b'' outside the support, where the quadrature form degenerates to 0/0;
//! an extension must then be supplied through diffusion_b (as_general fills
//! in the exact quadratic for Pearson targets).
struct GeneralDiffusionSpec {
  std::function<double(double)> drift;
  std::function<double(double)> density;
  double support_lo = -inf;
  double support_hi = inf;
  std::function<double(double)> density_d1;     // optional p'
  std::function<double(double)> density_d2;     // optional p''
  std::function<double(double)> drift_d1;       // optional a'
  std::function<double(double)> diffusion_b;    // optional extended b
  std::function<double(double)> diffusion_b_d1; // optional extended b'
  std::function<double(double)> diffusion_b_d2; // optional extended b''

  double a(double x) const { return drift(x); }
  double p(double x) const { return density(x); }

  double p1(double x) const {
    return density_d1 ? density_d1(x) : finite_difference(density, x, 1);
  }

  double p2(double x) const {
    return density_d2 ? density_d2(x) : finite_difference(density, x, 2);
  }

  double a1(double x) const { return drift_d1 ? drift_d1(x) : finite_difference(drift, x, 1); }

  bool in_support(double x) const { return x > support_lo && x < support_hi; }

  //! b by quadrature (interior) or through the supplied extension.
  double b_at(double x) const {
    if (diffusion_b) return diffusion_b(x);
    if (in_support(x)) return induced_b_quadrature(x);
    throw unsupported_error("b outside the support requires a diffusion_b closure");
  }

  //! b' everywhere: closure, else the interior identity b' = 2a - b p'/p
  //! (from differentiating b p = int 2 a p), else a finite difference of
  //! the extension.
  double bp_ext(double x) const {
    if (diffusion_b_d1) return diffusion_b_d1(x);
    if (in_support(x)) return 2 * a(x) - b_at(x) * p1(x) / p(x);
    if (diffusion_b) return finite_difference(diffusion_b, x, 1);
    throw unsupported_error("b' outside the support requires a diffusion_b closure");
  }

  //! b'' everywhere: closure, else 2a' - b'(p'/p) - b(p''/p - (p'/p)^2)
  //! inside, else a finite difference of the extension.
  double bpp_ext(double x) const {
    if (diffusion_b_d2) return diffusion_b_d2(x);
    if (in_support(x)) {
      const double px = p(x);
      const double r1 = p1(x) / px;
      return 2 * a1(x) - bp_ext(x) * r1 - b_at(x) * (p2(x) / px - r1 * r1);
    }
    if (diffusion_b) return finite_difference(diffusion_b, x, 2);
    throw unsupported_error("b'' outside the support requires a diffusion_b closure");
  }

  //! b at a support endpoint for scheme selection; without an extension the
  //! quadrature form vanishes there, which selects full truncation.
  double b_edge(double x) const { return diffusion_b ? diffusion_b(x) : 0.0; }

  //! |int a p| over the support; the standing assumptions require zero.
  double centering_residual() const {
    return std::abs(
        integrate([this](double y) { return a(y) * p(y); }, support_lo, support_hi, 1e-9));
  }

  double induced_b_quadrature(double x) const {
    const double px = p(x);
    if (!(px > density_floor)) throw domain_error("induced_b: density below floor");
    const double num = integrate([&](double y) { return 2.0 * a(y) * p(y); }, support_lo, x);
    return num / px;
  }
};

inline double induced_b(const GeneralDiffusionSpec& spec, double x) {
  if (!spec.in_support(x)) throw domain_error("induced_b: x outside the support");
  return spec.induced_b_quadrature(x);
}

//! View a Pearson target through the general-diffusion interface (exact
//! drift/density closures; the quadratic b is attached as the extension so
//! exterior formulas stay available).
inline GeneralDiffusionSpec as_general(const PearsonSpec& spec) {
  GeneralDiffusionSpec g;
  g.drift = [spec](double x) { return spec.drift(x); };
  g.density = [spec](double x) { return spec.density(x); };
  g.density_d1 = [spec](double x) { return spec.density_derivative(x, 1); };
  g.density_d2 = [spec](double x) { return spec.density_derivative(x, 2); };
  g.drift_d1 = [](double) { return -0.5; };
  g.diffusion_b = [spec](double x) { return spec.b(x); };
  g.diffusion_b_d1 = [spec](double x) { return spec.b_prime(x); };
  g.diffusion_b_d2 = [spec](double) { return 2 * spec.b2(); };
  g.support_lo = spec.support_lo();
  g.support_hi = spec.support_hi();
  return g;
}

//! Same view but with b left to quadrature, for validating the induced-b
//! path itself.
inline GeneralDiffusionSpec as_general_quadrature_b(const PearsonSpec& spec) {
  GeneralDiffusionSpec g = as_general(spec);
  g.diffusion_b = nullptr;
  g.diffusion_b_d1 = nullptr;
  g.diffusion_b_d2 = nullptr;
  return g;
}

}  // namespace pstein
