#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pstein/errors.hpp"
#include "pstein/general_diffusion.hpp"
#include "pstein/io.hpp"
#include "pstein/pearson.hpp"
#include "pstein/rng.hpp"

namespace pstein {

enum class BoundaryPolicy { clamp_with_indicator, reflect };
enum class Scheme { euler_maruyama, full_truncation_euler };

struct SimConfig {
  double dt = 1e-3;
  std::vector<double> t_grid;
  std::int64_t n_paths = 1;
  std::uint64_t seed = 0;
  BoundaryPolicy boundary = BoundaryPolicy::clamp_with_indicator;
  std::optional<Scheme> scheme;  // default per target: full truncation when b
                                 // vanishes at a finite endpoint
  int n_threads = 0;             // 0 = hardware concurrency

  void validate() const {
    if (!(dt > 0)) throw config_error("sim: dt must be positive");
    if (n_paths < 1) throw config_error("sim: n_paths must be >= 1");
    if (t_grid.empty()) throw config_error("sim: t_grid must be nonempty");
    double prev = 0.0;
    for (double t : t_grid) {
      if (t < prev) throw config_error("sim: t_grid must be nondecreasing from 0");
      const double gap = t - prev;
      if (gap > 0) {
        const double steps = gap / dt;
        if (std::abs(steps - std::round(steps)) > 1e-6 * std::max(1.0, steps))
          throw config_error("sim: dt must divide the t_grid spacings");
      }
      prev = t;
    }
    if (dt > t_grid.back() && t_grid.back() > 0)
      throw config_error("sim: dt larger than the horizon");
  }
};

//! Time-sliced ensemble of paths; values are row-major [path][slice].
//! Paths that produced a non-finite state are flagged and excluded from
//! exports and summaries, with the count reported.
struct Ensemble {
  std::vector<double> t_grid;
  std::int64_t n_paths = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
  std::int64_t n_excluded = 0;
  std::uint64_t seed = 0;

  double at(std::int64_t path, std::size_t slice) const {
    return values[static_cast<std::size_t>(path) * t_grid.size() + slice];
  }

  //! Values of all valid paths at one slice.
  std::vector<double> slice(std::size_t idx) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_paths));
    for (std::int64_t p = 0; p < n_paths; ++p)
      if (valid[static_cast<std::size_t>(p)]) out.push_back(at(p, idx));
    return out;
  }

  void to_csv(std::ostream& os) const {
    os << "t,path_id,value\n";
    for (std::int64_t p = 0; p < n_paths; ++p) {
      if (!valid[static_cast<std::size_t>(p)]) continue;
      for (std::size_t s = 0; s < t_grid.size(); ++s)
        os << fmt_full(t_grid[s]) << "," << p << "," << fmt_full(at(p, s)) << "\n";
    }
  }

  nlohmann::json summary_json() const {
    nlohmann::json j;
    j["n_paths"] = n_paths;
    j["n_excluded"] = n_excluded;
    j["seed"] = seed;
    j["t"] = t_grid;
    std::vector<double> mean, var, q05, q50, q95;
    for (std::size_t s = 0; s < t_grid.size(); ++s) {
      auto v = slice(s);
      const double n = static_cast<double>(v.size());
      double mu = 0;
      for (double x : v) mu += x / n;
      double s2 = 0;
      for (double x : v) s2 += (x - mu) * (x - mu) / std::max(1.0, n - 1);
      std::sort(v.begin(), v.end());
      auto quant = [&](double q) { return v[static_cast<std::size_t>(q * (n - 1))]; };
      mean.push_back(mu);
      var.push_back(s2);
      q05.push_back(quant(0.05));
      q50.push_back(quant(0.50));
      q95.push_back(quant(0.95));
    }
    j["mean"] = mean;
    j["var"] = var;
    j["quantiles"] = {{"p05", q05}, {"p50", q50}, {"p95", q95}};
    return j;
  }
};

namespace detail {

//! One path from t=0 through the slice grid. Noise is switched off outside
//! the open support; full truncation additionally clamps the argument of b.
//! The boundary policy is applied to the state after each step.
template <class Drift, class Diff>
void run_path(Drift&& a, Diff&& b, double lo, double hi, double z0, const SimConfig& cfg,
              Scheme scheme, Rng rng, double* out, std::uint8_t* ok) {
  const double sqrt_dt = std::sqrt(cfg.dt);
  double z = z0;
  double t_prev = 0.0;
  *ok = 1;
  for (std::size_t s = 0; s < cfg.t_grid.size(); ++s) {
    const double gap = cfg.t_grid[s] - t_prev;
    const auto n_steps = static_cast<std::int64_t>(std::llround(gap / cfg.dt));
    for (std::int64_t i = 0; i < n_steps; ++i) {
      const double zb = scheme == Scheme::full_truncation_euler ? std::clamp(z, lo, hi) : z;
      double bv = b(zb);
      if (scheme == Scheme::euler_maruyama && !(z > lo && z < hi)) bv = 0.0;
      const double diff = std::sqrt(std::max(0.0, bv));
      z += a(z) * cfg.dt + diff * sqrt_dt * rng.normal();
      if (cfg.boundary == BoundaryPolicy::clamp_with_indicator) {
        z = std::clamp(z, lo, hi);
      } else {
        for (int r = 0; r < 64 && !(z >= lo && z <= hi); ++r)
          z = z < lo ? 2 * lo - z : 2 * hi - z;
      }
      if (!std::isfinite(z)) {
        *ok = 0;
        break;
      }
    }
    if (!*ok) {
      for (std::size_t rest = s; rest < cfg.t_grid.size(); ++rest)
        out[rest] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    out[s] = z;
    t_prev = cfg.t_grid[s];
  }
}

template <class Drift, class Diff, class Z0>
Ensemble simulate_impl(Drift&& a, Diff&& b, double lo, double hi, Z0&& z0_of, Scheme scheme,
                       const SimConfig& cfg) {
  cfg.validate();
  Ensemble e;
  e.t_grid = cfg.t_grid;
  e.n_paths = cfg.n_paths;
  e.seed = cfg.seed;
  e.values.assign(static_cast<std::size_t>(cfg.n_paths) * cfg.t_grid.size(), 0.0);
  e.valid.assign(static_cast<std::size_t>(cfg.n_paths), 1);

  int workers = cfg.n_threads > 0 ? cfg.n_threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(cfg.n_paths)));

  auto work = [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t p = begin; p < end; ++p) {
      run_path(a, b, lo, hi, z0_of(p), cfg, scheme,
               Rng::stream(cfg.seed, static_cast<std::uint64_t>(p)),
               e.values.data() + static_cast<std::size_t>(p) * cfg.t_grid.size(),
               e.valid.data() + p);
    }
  };

  if (workers == 1) {
    work(0, cfg.n_paths);
  } else {
    std::vector<std::thread> pool;
    const std::int64_t chunk = (cfg.n_paths + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::int64_t b0 = w * chunk;
      const std::int64_t b1 = std::min<std::int64_t>(cfg.n_paths, b0 + chunk);
      if (b0 < b1) pool.emplace_back(work, b0, b1);
    }
    for (auto& th : pool) th.join();
  }

  for (auto v : e.valid)
    if (!v) ++e.n_excluded;
  return e;
}

}  // namespace detail

inline Scheme default_scheme(const PearsonSpec& spec) {
  const auto vanishes_at = [&](double x) {
    return std::isfinite(x) && std::abs(spec.b(x)) < 1e-12 * (1.0 + std::abs(x));
  };
  if (vanishes_at(spec.support_lo()) || vanishes_at(spec.support_hi()))
    return Scheme::full_truncation_euler;
  return Scheme::euler_maruyama;
}

//! Simulate the Pearson SDE dZ = (m - Z)/2 dt + sqrt(1{(lo,hi)} b(Z)) dB
//! from per-path initial values (one per path).
inline Ensemble simulate(const PearsonSpec& spec, std::span<const double> z0s,
                         const SimConfig& cfg) {
  if (static_cast<std::int64_t>(z0s.size()) != cfg.n_paths)
    throw config_error("simulate: need one initial value per path");
  for (double z0 : z0s)
    if (!(z0 >= spec.support_lo() && z0 <= spec.support_hi()))
      throw config_error("simulate: initial value outside the support closure");
  const Scheme scheme = cfg.scheme.value_or(default_scheme(spec));
  std::vector<double> init(z0s.begin(), z0s.end());
  return detail::simulate_impl([spec](double z) { return spec.drift(z); },
                               [spec](double z) { return spec.b(z); }, spec.support_lo(),
                               spec.support_hi(), [init](std::int64_t p) { return init[static_cast<std::size_t>(p)]; },
                               scheme, cfg);
}

//! Simulate from a deterministic initial condition.
inline Ensemble simulate(const PearsonSpec& spec, double z0, const SimConfig& cfg) {
  std::vector<double> init(static_cast<std::size_t>(cfg.n_paths), z0);
  return simulate(spec, init, cfg);
}

//! Simulate a general diffusion through its drift and (possibly induced) b.
inline Ensemble simulate(const GeneralDiffusionSpec& spec, double z0, const SimConfig& cfg) {
  const bool vanishing_edge =
      (std::isfinite(spec.support_lo) && std::abs(spec.b_edge(spec.support_lo)) < 1e-12) ||
      (std::isfinite(spec.support_hi) && std::abs(spec.b_edge(spec.support_hi)) < 1e-12);
  const Scheme scheme =
      cfg.scheme.value_or(vanishing_edge ? Scheme::full_truncation_euler : Scheme::euler_maruyama);
  return detail::simulate_impl([&spec](double z) { return spec.a(z); },
                               [&spec](double z) { return spec.b_at(z); }, spec.support_lo,
                               spec.support_hi, [z0](std::int64_t) { return z0; }, scheme, cfg);
}

//! Custom drift/diffusion simulation (e.g. forced zero noise).
inline Ensemble simulate_custom(std::function<double(double)> a, std::function<double(double)> b,
                                double lo, double hi, double z0, const SimConfig& cfg) {
  const Scheme scheme = cfg.scheme.value_or(Scheme::euler_maruyama);
  return detail::simulate_impl([a](double z) { return a(z); }, [b](double z) { return b(z); }, lo,
                               hi, [z0](std::int64_t) { return z0; }, scheme, cfg);
}

//! Exact i.i.d. draws from the stationary law of a built-in named family.
inline std::vector<double> stationary_sample(const PearsonSpec& spec, std::int64_t n,
                                             std::uint64_t seed) {
  std::vector<double> out(static_cast<std::size_t>(n));
  Rng rng = Rng::stream(seed, 0x5741u);
  switch (spec.family()) {
    case PearsonFamily::normal: {
      const double sd = std::sqrt(spec.b0());
      for (auto& x : out) x = spec.mean() + sd * rng.normal();
      break;
    }
    case PearsonFamily::gamma: {
      const double scale = spec.b1();
      const double shape = spec.mean() / scale;
      for (auto& x : out) x = scale * rng.gamma(shape);
      break;
    }
    case PearsonFamily::beta: {
      const double s = 1.0 / spec.b1();
      const double a = s * spec.mean();
      const double b = s * (1.0 - spec.mean());
      for (auto& x : out) x = rng.beta(a, b);
      break;
    }
    case PearsonFamily::student: {
      const double nu = 1.0 + 1.0 / spec.b2();
      const double scale = std::sqrt(spec.b0() / (spec.b2() * nu));
      for (auto& x : out) x = scale * rng.student_t(nu);
      break;
    }
    default:
      throw unsupported_error("stationary_sample: not a built-in named family");
  }
  return out;
}

}  // namespace pstein
