#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pstein/errors.hpp"
#include "pstein/io.hpp"
#include "pstein/pearson.hpp"
#include "pstein/rng.hpp"

namespace pstein {

//! Weighted sum of centered i.i.d. Gamma(gamma_shape, 1) variables,
//!     X = sum_i lambda_i (Y_i - gamma),   F = X + alpha,
//! approximating the Gamma(alpha, 1) target. Weights are strictly positive
//! and sorted descending. In the product Dirichlet structure the carre du
//! champ acts diagonally, Gamma(Y_i, Y_j) = delta_ij Y_i, and X sits in the
//! first chaos (eigenvalue 1), which is what makes every functional below
//! available in closed form.
struct WeightedGammaSpec {
  double gamma_shape = 1.0;
  std::vector<double> weights;
  double target_alpha = 1.0;

  WeightedGammaSpec(double gamma_shape_, std::vector<double> weights_, double alpha_)
      : gamma_shape(gamma_shape_), weights(std::move(weights_)), target_alpha(alpha_) {
    if (!(gamma_shape > 0) || !(target_alpha > 0))
      throw config_error("weighted gamma spec: shapes must be positive");
    if (weights.empty()) throw config_error("weighted gamma spec: no weights");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0)) throw config_error("weighted gamma spec: weights must be positive");
      if (i > 0 && weights[i] > weights[i - 1] * (1 + 1e-12))
        throw config_error("weighted gamma spec: weights must be descending");
    }
  }

  double sum_w() const {
    double s = 0;
    for (double l : weights) s += l;
    return s;
  }
  double sum_w2() const {
    double s = 0;
    for (double l : weights) s += l * l;
    return s;
  }

  nlohmann::json to_json() const {
    return {{"gamma", gamma_shape}, {"alpha", target_alpha}, {"weights", weights}};
  }
  static WeightedGammaSpec from_json(const nlohmann::json& j) {
    return WeightedGammaSpec(j.at("gamma").get<double>(),
                             j.at("weights").get<std::vector<double>>(),
                             j.at("alpha").get<double>());
  }
};

//! Column-wise batch of draws and the derived closed-form functionals.
struct ChaosBatch {
  std::vector<double> x, f, gamma_carre, q1, lq1, q2;

  std::size_t size() const { return x.size(); }

  void to_csv(std::ostream& os) const {
    os << "X,F,gamma_carre,Q1,LQ1,Q2\n";
    for (std::size_t i = 0; i < size(); ++i)
      os << fmt_full(x[i]) << "," << fmt_full(f[i]) << "," << fmt_full(gamma_carre[i]) << ","
         << fmt_full(q1[i]) << "," << fmt_full(lq1[i]) << "," << fmt_full(q2[i]) << "\n";
  }
};

//! Per sample: X = sum lambda_i (Y_i - gamma), Gamma(X) = sum lambda_i^2 Y_i,
//! Q1 = Gamma(X) - F, LQ1 = -sum (lambda_i^2 - lambda_i)(Y_i - gamma),
//! Q2 = sum lambda_i (lambda_i^2 - lambda_i) Y_i.
inline ChaosBatch sample(const WeightedGammaSpec& spec, std::int64_t n_samples,
                         std::uint64_t seed, int n_threads = 0) {
  ChaosBatch b;
  const auto n = static_cast<std::size_t>(n_samples);
  b.x.resize(n);
  b.f.resize(n);
  b.gamma_carre.resize(n);
  b.q1.resize(n);
  b.lq1.resize(n);
  b.q2.resize(n);

  const auto& w = spec.weights;
  const double g = spec.gamma_shape;
  const double alpha = spec.target_alpha;

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = Rng::stream(seed, i);
      double x = 0, carre = 0, lq1 = 0, q2 = 0;
      for (double l : w) {
        const double y = rng.gamma(g);
        x += l * (y - g);
        carre += l * l * y;
        lq1 -= (l * l - l) * (y - g);
        q2 += l * (l * l - l) * y;
      }
      b.x[i] = x;
      b.f[i] = x + alpha;
      b.gamma_carre[i] = carre;
      b.q1[i] = carre - (x + alpha);
      b.lq1[i] = lq1;
      b.q2[i] = q2;
    }
  };

  int workers =
      n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(1, n / 4096))));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / static_cast<std::size_t>(workers);
    for (int t = 0; t < workers; ++t) {
      const std::size_t b0 = static_cast<std::size_t>(t) * chunk;
      const std::size_t b1 = std::min(n, b0 + chunk);
      if (b0 < b1) pool.emplace_back(work, b0, b1);
    }
    for (auto& th : pool) th.join();
  }
  return b;
}

//! E[Q1^2] = gamma sum (l^2 - l)^2 + (gamma sum l^2 - alpha)^2, exactly.
inline double e_q1_sq(const WeightedGammaSpec& spec) {
  double s = 0;
  for (double l : spec.weights) {
    const double d = l * l - l;
    s += d * d;
  }
  const double meanq1 = spec.gamma_shape * spec.sum_w2() - spec.target_alpha;
  return spec.gamma_shape * s + meanq1 * meanq1;
}

//! E[(L Q1)^2] = gamma sum (l^2 - l)^2, exactly.
inline double e_lq1_sq(const WeightedGammaSpec& spec) {
  double s = 0;
  for (double l : spec.weights) {
    const double d = l * l - l;
    s += d * d;
  }
  return spec.gamma_shape * s;
}

struct SpectralSums {
  std::vector<double> R;  // R[q-1] = q! e_q(lambda^2), distinct-index sums
  std::vector<double> S;  // S[q-1] = q! e_q(lambda)
};

//! Distinct-index spectral sums via elementary symmetric polynomials with
//! the stable product recurrence (the weights arrive sorted descending);
//! the naive distinct-index sums are factorially large as written.
inline SpectralSums spectral_sums(const WeightedGammaSpec& spec, int q_max) {
  if (q_max < 1 || q_max > static_cast<int>(spec.weights.size()))
    throw config_error("spectral_sums: need 1 <= q_max <= weight count");
  auto elementary = [&](bool squared) {
    std::vector<double> e(static_cast<std::size_t>(q_max) + 1, 0.0);
    e[0] = 1.0;
    for (double l : spec.weights) {
      const double v = squared ? l * l : l;
      for (int q = q_max; q >= 1; --q)
        e[static_cast<std::size_t>(q)] += v * e[static_cast<std::size_t>(q) - 1];
    }
    return e;
  };
  const auto e2 = elementary(true);
  const auto e1 = elementary(false);
  SpectralSums out;
  double fact = 1.0;
  for (int q = 1; q <= q_max; ++q) {
    fact *= q;
    out.R.push_back(fact * e2[static_cast<std::size_t>(q)]);
    out.S.push_back(fact * e1[static_cast<std::size_t>(q)]);
  }
  return out;
}

//! Partial product (alpha/2) prod_{i=1..q} (alpha/2 - sum_{j<=i} lambda_j^2),
//! with the partial sums truncated at the weight count.
inline double m_product(const WeightedGammaSpec& spec, int q) {
  if (q < 1) throw config_error("m_product: q must be >= 1");
  const double half_alpha = 0.5 * spec.target_alpha;
  double prod = half_alpha;
  double partial = 0.0;
  for (int i = 1; i <= q; ++i) {
    if (i <= static_cast<int>(spec.weights.size())) {
      const double l = spec.weights[static_cast<std::size_t>(i) - 1];
      partial += l * l;
    }
    prod *= half_alpha - partial;
  }
  return prod;
}

enum class SpectralVariable { R, S };

//! Two-term Laplace-transform bound on the negative moment E[Gamma(X)^-q]
//! (variable R) or E[F^-q] (variable S):
//!     (1/(2 Gamma(q))) [ 1/((q - g) T_1^g) + 1/((g(p+1) - q) T_{p+1}^g) ],
//! with p the smallest integer in (q/g - 1, alpha/g) and m the smallest
//! integer with q > 1/m + g (m only gates validity; it cancels from the
//! closed form).
inline double negative_moment_bound(const WeightedGammaSpec& spec, double q,
                                    SpectralVariable use) {
  const double g = spec.gamma_shape;
  const double alpha = spec.target_alpha;
  if (!(q > g && q < alpha))
    throw config_error("negative_moment_bound: need gamma < q < alpha");
  const int p = static_cast<int>(std::floor(q / g - 1.0)) + 1;
  if (!(p < alpha / g)) throw config_error("negative_moment_bound: alpha too small for this q");
  if (p + 1 > static_cast<int>(spec.weights.size()))
    throw config_error("negative_moment_bound: too few weights for the spectral term");
  int m = 1;
  while (!(q > 1.0 / m + g)) ++m;

  const auto sums = spectral_sums(spec, p + 1);
  const double t1 = use == SpectralVariable::R ? sums.R[0] : sums.S[0];
  const double tp = use == SpectralVariable::R ? sums.R.back() : sums.S.back();
  if (!(t1 > 0) || !(tp > 0)) throw config_error("negative_moment_bound: degenerate sums");
  const double c = 0.5 / std::tgamma(q);
  return c * (1.0 / ((q - g) * std::pow(t1, g)) +
              1.0 / ((g * (p + 1) - q) * std::pow(tp, g)));
}

enum class CharfunOf { gamma_carre, F };

//! Characteristic function: prod (1 - i t lambda^2)^-gamma for Gamma(X),
//! and the shifted prod (1 - i t lambda)^-gamma e^{i t (alpha - gamma sum
//! lambda)} for F.
inline std::complex<double> charfun(const WeightedGammaSpec& spec, double t, CharfunOf of) {
  const std::complex<double> i(0.0, 1.0);
  std::complex<double> log_acc(0.0, 0.0);
  for (double l : spec.weights) {
    const double u = of == CharfunOf::gamma_carre ? l * l : l;
    log_acc -= spec.gamma_shape * std::log(1.0 - i * t * u);
  }
  if (of == CharfunOf::F)
    log_acc += i * t * (spec.target_alpha - spec.gamma_shape * spec.sum_w());
  return std::exp(log_acc);
}

//! Four-moment discrepancy functional M(q) for a Pearson target with
//! coefficients (b2, b1, b0) and mean m, evaluated from the first four raw
//! moments of F:
//!     W(x) = x^2 + 2(b1+m)/(2b2-1) x + (b0 + m(b1+m)/(2b2-1))/(b2-1),
//!     V(x) = (1-b2) W^2 - (1/12) (W')^3 (x - m),
//!     M(q) = 2(1-b2-q/4) E[V(F)]            for q <= 2(1-b2),
//!          + ((q-2(1-b2))(1-b2)/2) E[W^2(F)] for q >  2(1-b2).
inline double four_moment_M(std::span<const double> mu, double q, double b2, double b1,
                            double b0, double m) {
  if (mu.size() != 4) throw config_error("four_moment_M: need exactly four moments");
  if (!(q > 0)) throw config_error("four_moment_M: chaos grade must be positive");
  if (!(b2 < 1.0)) throw config_error("four_moment_M: requires b2 < 1");
  if (b2 == 0.5) throw config_error("four_moment_M: W is singular at b2 = 1/2");

  const double w1 = 2.0 * (b1 + m) / (2.0 * b2 - 1.0);
  const double w0 = (b0 + m * (b1 + m) / (2.0 * b2 - 1.0)) / (b2 - 1.0);

  auto expect = [&](const Poly& poly) {
    double acc = poly.coeff(0);
    for (int j = 1; j <= poly.degree(); ++j)
      acc += poly.coeff(j) * mu[static_cast<std::size_t>(j) - 1];
    return acc;
  };

  const Poly w{w0, w1, 1.0};
  const Poly wsq = w * w;
  const Poly wp = w.derivative();
  const Poly wp3_shift = wp * wp * wp * Poly{-m, 1.0};

  const double e_w2 = expect(wsq);
  const double e_v = (1.0 - b2) * e_w2 - expect(wp3_shift) / 12.0;

  double out = 2.0 * (1.0 - b2 - 0.25 * q) * e_v;
  const double thresh = 2.0 * (1.0 - b2);
  if (q > thresh) out += 0.5 * (q - thresh) * (1.0 - b2) * e_w2;
  return out;
}

inline double four_moment_M(std::span<const double> mu, double q, const PearsonSpec& target) {
  return four_moment_M(mu, q, target.b2(), target.b1(), target.b0(), target.mean());
}

}  // namespace pstein
