#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pstein/errors.hpp"
#include "pstein/poly.hpp"
#include "pstein/quadrature.hpp"

namespace pstein {

inline constexpr double inf = std::numeric_limits<double>::infinity();

enum class PearsonFamily { normal, gamma, beta, student, custom };

//! Target of a Pearson diffusion dZ = (m - Z)/2 dt + sqrt(b(Z)) dB with
//! quadratic squared diffusion b(x) = b2 x^2 + b1 x + b0 > 0 on the support
//! (lo, hi). The stationary density is
//!     p(x) = C / b(x) * exp(-int_m^x (y - m)/b(y) dy),
//! with C fixed by adaptive quadrature so that p integrates to one. The
//! inner integral has a closed form for quadratic b, used throughout.
//!
//! Density derivatives are exact rationals: p^(k) = q_k * p with q_k =
//! A_k / b^k and the polynomial recursion A_{k+1} = A_k' b - A_k (x - m +
//! (k+1) b'), A_0 = 1. Instances are immutable after construction and safe
//! to evaluate concurrently.
class PearsonSpec {
public:
  PearsonSpec(double b2, double b1, double b0, double m, double lo, double hi, int k_max = 6)
      : b2_(b2), b1_(b1), b0_(b0), m_(m), lo_(lo), hi_(hi), k_max_(k_max) {
    validate();
    build_derivative_table();
    normalize();
    detect_family();
  }

  static PearsonSpec normal() { return PearsonSpec(0, 0, 1, 0, -inf, inf); }
  static PearsonSpec gamma(double alpha) {
    if (!(alpha > 0)) throw config_error("gamma spec needs alpha > 0");
    return PearsonSpec(0, 1, 0, alpha, 0, inf);
  }
  static PearsonSpec beta(double a, double b) {
    if (!(a > 0) || !(b > 0)) throw config_error("beta spec needs positive shapes");
    const double s = a + b;
    return PearsonSpec(-1 / s, 1 / s, 0, a / s, 0, 1);
  }
  static PearsonSpec student(double b2, double b0) {
    if (!(b2 > 0) || !(b0 > 0)) throw config_error("student spec needs b2, b0 > 0");
    return PearsonSpec(b2, 0, b0, 0, -inf, inf);
  }

  double b2() const { return b2_; }
  double b1() const { return b1_; }
  double b0() const { return b0_; }
  double mean() const { return m_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  int k_max() const { return k_max_; }
  double norm_const() const { return norm_const_; }
  PearsonFamily family() const { return family_; }

  bool in_support(double x) const { return x > lo_ && x < hi_; }

  double b(double x) const { return (b2_ * x + b1_) * x + b0_; }
  double b_prime(double x) const { return 2 * b2_ * x + b1_; }
  Poly b_poly() const { return Poly{b0_, b1_, b2_}; }

  //! Drift of the diffusion (mean-reversion speed 1/2).
  double drift(double x) const { return 0.5 * (m_ - x); }

  //! Stationary density; zero outside the support.
  double density(double x) const {
    if (!in_support(x)) return 0.0;
    return norm_const_ * unnormalized(x);
  }

  //! k-th derivative of the stationary density, k <= k_max(); zero outside
  //! the support.
  double density_derivative(double x, int k) const {
    if (k < 0 || k > k_max_) throw domain_error("density_derivative: k exceeds k_max");
    if (!in_support(x)) return 0.0;
    if (k == 0) return density(x);
    return q_num_[static_cast<std::size_t>(k)](x) / std::pow(b(x), k) * density(x);
  }

  //! Numerator polynomial A_k of q_k = A_k / b^k (p^(k) = q_k p).
  const Poly& q_numerator(int k) const {
    if (k < 0 || k > k_max_) throw domain_error("q_numerator: k exceeds k_max");
    return q_num_[static_cast<std::size_t>(k)];
  }

  double cdf(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    return std::min(1.0, integrate([this](double y) { return density(y); }, lo_, x));
  }

  double quantile(double p) const {
    if (!(p > 0.0) || !(p < 1.0)) throw domain_error("quantile: p must be in (0,1)");
    double a = std::isfinite(lo_) ? lo_ : m_ - 1.0;
    double b_ = std::isfinite(hi_) ? hi_ : m_ + 1.0;
    if (!std::isfinite(lo_))
      while (cdf(a) > p) a = m_ - 2 * (m_ - a);
    if (!std::isfinite(hi_))
      while (cdf(b_) < p) b_ = m_ + 2 * (b_ - m_);
    for (int it = 0; it < 200 && b_ - a > 1e-12 * (1.0 + std::abs(a) + std::abs(b_)); ++it) {
      const double mid = 0.5 * (a + b_);
      (cdf(mid) < p ? a : b_) = mid;
    }
    return 0.5 * (a + b_);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["b2"] = b2_;
    j["b1"] = b1_;
    j["b0"] = b0_;
    j["m"] = m_;
    j["lo"] = std::isfinite(lo_) ? nlohmann::json(lo_) : nlohmann::json("-inf");
    j["hi"] = std::isfinite(hi_) ? nlohmann::json(hi_) : nlohmann::json("inf");
    return j;
  }

  static PearsonSpec from_json(const nlohmann::json& j) {
    auto endpoint = [](const nlohmann::json& v) -> double {
      if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf") return inf;
        if (s == "-inf") return -inf;
        throw config_error("bad endpoint string: " + s);
      }
      return v.get<double>();
    };
    return PearsonSpec(j.at("b2").get<double>(), j.at("b1").get<double>(),
                       j.at("b0").get<double>(), j.at("m").get<double>(),
                       endpoint(j.at("lo")), endpoint(j.at("hi")));
  }

  //! exp(-phi(x)) / b(x) without the normalizing constant.
  double unnormalized(double x) const { return std::exp(-phi(x)) / b(x); }

  //! Closed-form phi(x) = int_m^x (y - m)/b(y) dy inside the support.
  double phi(double x) const {
    if (b2_ != 0.0) {
      const double logs = 0.5 / b2_ * (std::log(std::abs(b(x))) - std::log(std::abs(b(m_))));
      return logs - (m_ + b1_ / (2 * b2_)) * inv_b_integral(x);
    }
    if (b1_ != 0.0) {
      const double c = (m_ * b1_ + b0_) / (b1_ * b1_);
      return (x - m_) / b1_ - c * (std::log(std::abs(b1_ * x + b0_)) - std::log(std::abs(b1_ * m_ + b0_)));
    }
    return (x - m_) * (x - m_) / (2 * b0_);
  }

private:
  //! int_m^x dy / b(y) for quadratic b with b2 != 0.
  double inv_b_integral(double x) const {
    const double disc = b1_ * b1_ - 4 * b2_ * b0_;
    const double bx = 2 * b2_ * x + b1_;
    const double bm = 2 * b2_ * m_ + b1_;
    if (disc < 0.0) {
      const double r = std::sqrt(-disc);
      return 2.0 / r * (std::atan(bx / r) - std::atan(bm / r));
    }
    if (disc > 0.0) {
      const double r = std::sqrt(disc);
      return 1.0 / r * std::log(std::abs((bx - r) * (bm + r) / ((bx + r) * (bm - r))));
    }
    return -2.0 / bx + 2.0 / bm;
  }

  void validate() const {
    if (!(lo_ < m_ && m_ < hi_)) throw config_error("need lo < m < hi");
    if (!(b(m_) > 0)) throw config_error("b(m) must be positive");
    // b must have no root strictly inside (lo, hi).
    if (b2_ != 0.0) {
      const double disc = b1_ * b1_ - 4 * b2_ * b0_;
      if (disc > 0.0) {
        const double r = std::sqrt(disc);
        for (double root : {(-b1_ - r) / (2 * b2_), (-b1_ + r) / (2 * b2_)})
          if (root > lo_ && root < hi_) throw config_error("b has a root inside the support");
      }
    } else if (b1_ != 0.0) {
      const double root = -b0_ / b1_;
      if (root > lo_ && root < hi_) throw config_error("b has a root inside the support");
    } else if (!(b0_ > 0)) {
      throw config_error("constant b must be positive");
    }
  }

  void build_derivative_table() {
    if (k_max_ < 0) throw config_error("k_max must be >= 0");
    q_num_.clear();
    q_num_.reserve(static_cast<std::size_t>(k_max_) + 1);
    q_num_.push_back(Poly::constant(1.0));
    const Poly b = b_poly();
    const Poly bp = b.derivative();
    const Poly x_minus_m{-m_, 1.0};
    for (int k = 0; k < k_max_; ++k) {
      const Poly& a = q_num_.back();
      q_num_.push_back(a.derivative() * b - a * (x_minus_m + static_cast<double>(k + 1) * bp));
    }
  }

  void normalize() {
    double err = 0.0;
    const double total =
        integrate([this](double x) { return unnormalized(x); }, lo_, hi_, quad_rel_tol, &err);
    if (!(total > 0) || !std::isfinite(total))
      throw config_error("density normalization failed");
    if (err > 1e-6 * total) throw config_error("density normalization did not converge");
    norm_const_ = 1.0 / total;
  }

  void detect_family() {
    const bool full_line = !std::isfinite(lo_) && !std::isfinite(hi_);
    if (b2_ == 0.0 && b1_ == 0.0 && full_line) {
      family_ = PearsonFamily::normal;
    } else if (b2_ == 0.0 && b1_ > 0.0 && b0_ == 0.0 && lo_ == 0.0 && !std::isfinite(hi_)) {
      family_ = PearsonFamily::gamma;
    } else if (b0_ == 0.0 && b2_ < 0.0 && b1_ == -b2_ && lo_ == 0.0 && hi_ == 1.0) {
      family_ = PearsonFamily::beta;
    } else if (b2_ > 0.0 && b1_ == 0.0 && b0_ > 0.0 && m_ == 0.0 && full_line) {
      family_ = PearsonFamily::student;
    } else {
      family_ = PearsonFamily::custom;
    }
  }

  double b2_, b1_, b0_, m_, lo_, hi_;
  int k_max_;
  double norm_const_ = 0.0;
  PearsonFamily family_ = PearsonFamily::custom;
  std::vector<Poly> q_num_;
};

//! Max over the grid of |b(x) p(x) - 2 int_lo^x (m - w) p(w) dw|, the
//! consistency identity tying the quadratic diffusion to the stationary law.
inline double check_drift_diffusion_relation(const PearsonSpec& spec,
                                             std::span<const double> grid) {
  double worst = 0.0;
  for (double x : grid) {
    const double lhs = spec.b(x) * spec.density(x);
    const double rhs = 2.0 * integrate(
        [&](double w) { return (spec.mean() - w) * spec.density(w); }, spec.support_lo(), x);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

}  // namespace pstein
