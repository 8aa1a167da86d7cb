#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace pstein {

//! Dense univariate polynomial with double coefficients, c[j] * x^j.
//! Used for the exact rational-function arithmetic behind density
//! derivatives and the representation weights: numerators are kept as
//! coefficient arrays, denominators as powers of the diffusion polynomial.
class Poly {
public:
  Poly() : c_(1, 0.0) {}
  Poly(std::initializer_list<double> c) : c_(c) { trim(); }
  explicit Poly(std::vector<double> c) : c_(std::move(c)) { trim(); }

  static Poly constant(double a) { return Poly{a}; }

  int degree() const { return static_cast<int>(c_.size()) - 1; }

  double coeff(int j) const {
    return (j >= 0 && j < static_cast<int>(c_.size())) ? c_[static_cast<std::size_t>(j)] : 0.0;
  }

  const std::vector<double>& coeffs() const { return c_; }

  //! Horner evaluation.
  double operator()(double x) const {
    double acc = 0.0;
    for (std::size_t j = c_.size(); j-- > 0;) acc = acc * x + c_[j];
    return acc;
  }

  Poly derivative() const {
    if (c_.size() <= 1) return Poly{};
    std::vector<double> d(c_.size() - 1);
    for (std::size_t j = 1; j < c_.size(); ++j) d[j - 1] = static_cast<double>(j) * c_[j];
    return Poly(std::move(d));
  }

  Poly& operator+=(const Poly& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), 0.0);
    for (std::size_t j = 0; j < o.c_.size(); ++j) c_[j] += o.c_[j];
    trim();
    return *this;
  }

  Poly& operator-=(const Poly& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), 0.0);
    for (std::size_t j = 0; j < o.c_.size(); ++j) c_[j] -= o.c_[j];
    trim();
    return *this;
  }

  Poly& operator*=(double a) {
    for (double& cj : c_) cj *= a;
    trim();
    return *this;
  }

  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(Poly a, double s) { return a *= s; }
  friend Poly operator*(double s, Poly a) { return a *= s; }

  friend Poly operator*(const Poly& a, const Poly& b) {
    std::vector<double> r(a.c_.size() + b.c_.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) r[i + j] += a.c_[i] * b.c_[j];
    return Poly(std::move(r));
  }

  double max_abs_coeff() const {
    double m = 0.0;
    for (double cj : c_) m = std::max(m, std::abs(cj));
    return m;
  }

private:
  void trim() {
    while (c_.size() > 1 && c_.back() == 0.0) c_.pop_back();
    if (c_.empty()) c_.assign(1, 0.0);
  }

  std::vector<double> c_;
};

}  // namespace pstein
