#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "json.hpp"
#include "pstein/errors.hpp"
#include "pstein/io.hpp"

namespace pstein {

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> value;
  std::vector<double> std_err;
  int order = 0;
  double bandwidth = 0.0;
  std::int64_t n = 0;

  void to_csv(std::ostream& os) const {
    os << "x,value,stderr\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
      os << fmt_full(grid[i]) << "," << fmt_full(value[i]) << "," << fmt_full(std_err[i]) << "\n";
  }

  nlohmann::json sidecar_json() const {
    return {{"bandwidth", bandwidth}, {"n", n}, {"order", order}};
  }
};

namespace detail {

inline double gauss_kernel_deriv(double z, int k) {
  // phi^(k)(z) = (-1)^k He_k(z) phi(z), probabilists' Hermite
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  double he = 1.0;
  switch (k) {
    case 0: he = 1.0; break;
    case 1: he = z; break;
    case 2: he = z * z - 1.0; break;
    case 3: he = z * (z * z - 3.0); break;
    default: throw domain_error("kde: derivative order must be <= 3");
  }
  return (k % 2 == 0 ? 1.0 : -1.0) * he * phi;
}

inline double robust_scale(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double q25 = s[static_cast<std::size_t>(0.25 * (n - 1))];
  const double q75 = s[static_cast<std::size_t>(0.75 * (n - 1))];
  double mean = 0;
  for (double v : s) mean += v / static_cast<double>(n);
  double var = 0;
  for (double v : s) var += (v - mean) * (v - mean) / static_cast<double>(n - 1);
  return std::min(std::sqrt(var), (q75 - q25) / 1.349);
}

}  // namespace detail

//! Default bandwidth: Silverman's 0.9 * min(sd, IQR/1.349) rule with the
//! exponent adapted to the derivative order, n^(-1/(2k+5)).
inline double kde_bandwidth(std::span<const double> samples, int k) {
  const double scale = detail::robust_scale(samples);
  return 0.9 * scale * std::pow(static_cast<double>(samples.size()), -1.0 / (2 * k + 5));
}

//! Gaussian-kernel estimate of the k-th density derivative on a grid, with
//! per-point Monte Carlo standard errors. k <= 3, n >= 100.
inline DensityEstimate kde(std::span<const double> samples, std::span<const double> grid,
                           int k = 0, double bandwidth = 0.0) {
  if (samples.size() < 100) throw config_error("kde: need at least 100 samples");
  if (k < 0 || k > 3) throw config_error("kde: derivative order must be in 0..3");
  DensityEstimate est;
  est.order = k;
  est.n = static_cast<std::int64_t>(samples.size());
  est.bandwidth = bandwidth > 0 ? bandwidth : kde_bandwidth(samples, k);
  est.grid.assign(grid.begin(), grid.end());
  est.value.resize(grid.size());
  est.std_err.resize(grid.size());

  const double h = est.bandwidth;
  const double scale = 1.0 / std::pow(h, k + 1);
  const double n = static_cast<double>(samples.size());
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    double s1 = 0, s2 = 0;
    for (double xi : samples) {
      const double w = scale * detail::gauss_kernel_deriv((grid[gi] - xi) / h, k);
      s1 += w;
      s2 += w * w;
    }
    const double mean = s1 / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    est.value[gi] = mean;
    est.std_err[gi] = std::sqrt(var / n);
  }
  return est;
}

enum class IndicatorDirection { greater, leq };

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::int64_t n = 0;
  std::int64_t n_violations = 0;  // nonpositive samples for negative moments
};

//! Monte Carlo mean and standard error of 1{F > x} H (or 1{F <= x} H) over
//! paired samples.
inline McEstimate indicator_expectation(std::span<const double> f, std::span<const double> h,
                                        double x, IndicatorDirection dir) {
  if (f.size() != h.size() || f.empty())
    throw config_error("indicator_expectation: paired nonempty samples required");
  double s1 = 0, s2 = 0;
  const double n = static_cast<double>(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const bool in = dir == IndicatorDirection::greater ? f[i] > x : f[i] <= x;
    const double v = in ? h[i] : 0.0;
    s1 += v;
    s2 += v * v;
  }
  McEstimate e;
  e.n = static_cast<std::int64_t>(f.size());
  e.mean = s1 / n;
  e.std_err = std::sqrt(std::max(0.0, s2 / n - e.mean * e.mean) / n);
  return e;
}

//! MC estimate of E[X^-q] over the positive samples; nonpositive samples
//! are counted as violations and excluded. Instability near q >= alpha for
//! Gamma-type laws shows up through the standard error, not an exception.
inline McEstimate negative_moment(std::span<const double> samples, double q) {
  if (samples.empty()) throw config_error("negative_moment: empty sample set");
  if (!(q > 0)) throw config_error("negative_moment: q must be positive");
  double s1 = 0, s2 = 0;
  std::int64_t n_pos = 0, n_bad = 0;
  for (double x : samples) {
    if (!(x > 0)) {
      ++n_bad;
      continue;
    }
    const double v = std::pow(x, -q);
    s1 += v;
    s2 += v * v;
    ++n_pos;
  }
  McEstimate e;
  e.n = n_pos;
  e.n_violations = n_bad;
  if (n_pos > 0) {
    const double n = static_cast<double>(n_pos);
    e.mean = s1 / n;
    e.std_err = std::sqrt(std::max(0.0, s2 / n - e.mean * e.mean) / n);
  }
  return e;
}

}  // namespace pstein
