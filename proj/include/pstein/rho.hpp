#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "pstein/errors.hpp"
#include "pstein/pearson.hpp"
#include "pstein/poly.hpp"
#include "pstein/quadrature.hpp"

namespace pstein {

//! Triangular coefficient table behind the representation weights
//!     rho_k(x) = sum_j c[k][j] x^j / b(x)^k,   1 <= k <= k_max + 1,
//! filled level by level from the scalar recursion
//!     c[k+1][j] = c[k][j] (m + b1 (j-k-1))
//!               - c[k][j-1] ((2k+3-j) b2 + 1)
//!               + b0 c[k][j+1] (j+1),
//! with c[1][1] = 2 b2 + 1, c[1][0] = b1 - m and out-of-range entries zero.
//! The weights satisfy p^(k)(x) = E[1{Z > x} rho_{k+1}(Z)] for the target Z.
class RhoTable {
public:
  RhoTable(const PearsonSpec& spec, int k_max)
      : spec_(spec), k_max_(k_max), c_(static_cast<std::size_t>(k_max) + 2) {
    if (k_max < 0) throw config_error("RhoTable: k_max must be >= 0");
    c_[1] = {spec.b1() - spec.mean(), 2 * spec.b2() + 1};
    for (int k = 1; k <= k_max; ++k) {
      const auto& prev = c_[static_cast<std::size_t>(k)];
      auto at = [&](int j) { return (j >= 0 && j <= k) ? prev[static_cast<std::size_t>(j)] : 0.0; };
      std::vector<double> next(static_cast<std::size_t>(k) + 2);
      for (int j = 0; j <= k + 1; ++j) {
        next[static_cast<std::size_t>(j)] =
            at(j) * (spec.mean() + spec.b1() * (j - k - 1)) -
            at(j - 1) * ((2 * k + 3 - j) * spec.b2() + 1) +
            spec.b0() * at(j + 1) * (j + 1);
      }
      c_[static_cast<std::size_t>(k) + 1] = std::move(next);
    }
  }

  const PearsonSpec& spec() const { return spec_; }
  int k_max() const { return k_max_; }

  double coeff(int k, int j) const {
    check_level(k);
    const auto& row = c_[static_cast<std::size_t>(k)];
    return (j >= 0 && j < static_cast<int>(row.size())) ? row[static_cast<std::size_t>(j)] : 0.0;
  }

  //! rho_k(x); pole error when b(x) = 0 (only possible outside the support).
  double rho(int k, double x) const {
    check_level(k);
    const double bx = spec_.b(x);
    if (bx == 0.0) throw domain_error("rho: b(x) = 0");
    const auto& row = c_[static_cast<std::size_t>(k)];
    double num = 0.0;
    for (std::size_t j = row.size(); j-- > 0;) num = num * x + row[j];
    return num / std::pow(bx, k);
  }

  void dump_csv(std::ostream& os) const {
    os << "k,j,c\n";
    for (int k = 1; k <= k_max_ + 1; ++k)
      for (int j = 0; j <= k; ++j) os << k << "," << j << "," << coeff(k, j) << "\n";
  }

private:
  void check_level(int k) const {
    if (k < 1 || k > k_max_ + 1) throw domain_error("rho level out of range");
  }

  PearsonSpec spec_;
  int k_max_;
  std::vector<std::vector<double>> c_;
};

//! Independent construction of the same weights through rational-function
//! differentiation: rho_{k+1} = -rho_k (x - m + b')/b + rho_k', carried out
//! exactly on (numerator polynomial, power of b) pairs. This is the
//! reference path the coefficient table is validated against.
class SymbolicRho {
public:
  SymbolicRho(const PearsonSpec& spec, int k_max) : spec_(spec) {
    const Poly b = spec.b_poly();
    const Poly bp = b.derivative();
    const Poly x_minus_m{-spec.mean(), 1.0};
    num_.resize(static_cast<std::size_t>(k_max) + 2);
    num_[1] = x_minus_m + bp;  // rho_1 = (x - m + b') / b
    for (int k = 1; k <= k_max; ++k) {
      const Poly& n = num_[static_cast<std::size_t>(k)];
      num_[static_cast<std::size_t>(k) + 1] =
          n.derivative() * b - n * (x_minus_m + static_cast<double>(k + 1) * bp);
    }
  }

  const Poly& numerator(int k) const { return num_.at(static_cast<std::size_t>(k)); }

  double operator()(int k, double x) const {
    const double bx = spec_.b(x);
    if (bx == 0.0) throw domain_error("rho: b(x) = 0");
    return numerator(k)(x) / std::pow(bx, k);
  }

private:
  PearsonSpec spec_;
  std::vector<Poly> num_;
};

inline RhoTable build_rho_table(const PearsonSpec& spec, int k_max) {
  return RhoTable(spec, k_max);
}

inline double rho_via_symbolic(const PearsonSpec& spec, int k, double x) {
  return SymbolicRho(spec, k)(k, x);
}

//! Density with derivative closures for the generic representation weight
//! h_k = -p^(k+1)/p. Missing derivatives fall back to central finite
//! differences.
struct DensityWithDerivatives {
  std::function<double(double)> p;
  std::vector<std::function<double(double)>> deriv;  // deriv[i] = p^(i+1)

  double derivative(int order, double x) const {
    const std::size_t idx = static_cast<std::size_t>(order) - 1;
    if (idx < deriv.size() && deriv[idx]) return deriv[idx](x);
    return finite_difference(p, x, order);
  }
};

inline double h_general(const DensityWithDerivatives& f, int k, double x) {
  const double px = f.p(x);
  if (!(px > density_floor)) throw domain_error("h_general: density below floor");
  return -f.derivative(k + 1, x) / px;
}

//! |p^(k)(x) - int_x^u rho_{k+1} p| by adaptive quadrature for interior x;
//! for x at or below the lower endpoint the representation switches to the
//! indicator {Z < x}, whose integral over the support is empty.
inline double representation_residual(const RhoTable& table, int k, double x) {
  const PearsonSpec& spec = table.spec();
  if (k < 0 || k > table.k_max()) throw domain_error("representation_residual: bad k");
  const double u = spec.support_hi();
  const double l = spec.support_lo();
  if (x <= l) return std::abs(spec.density_derivative(x, k));  // integral side is empty
  const double hi = std::min(x, u);
  double integral = 0.0;
  if (x < u)
    integral = integrate(
        [&](double w) { return table.rho(k + 1, w) * spec.density(w); }, hi, u, 1e-10);
  return std::abs(spec.density_derivative(x, k) - integral);
}

}  // namespace pstein
