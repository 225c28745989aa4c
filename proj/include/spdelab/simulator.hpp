#pragma once

// Paths of dX = (grad V(X) - A X) dt + sqrt(2) dW in truncated eigen-coordinates.
// V = 0 uses exact Ornstein-Uhlenbeck transitions between requested times;
// otherwise an exponential Euler scheme that treats the linear part and the
// stochastic convolution exactly on each step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/potential.hpp"
#include "spdelab/spectrum.hpp"

namespace spdelab {

struct PointStart {
  std::vector<double> x;
};
struct StationaryStart {};
using InitialCondition = std::variant<PointStart, StationaryStart>;

struct SimConfig {
  SpectrumModel spectrum;
  PotentialModel pot = builtin_zero();
  double dt = 1e-2;
  double t_max = 1.0;
  InitialCondition initial = StationaryStart{};
  std::uint64_t seed = 0;

  /// dt bound required when V != 0.
  double stability_limit() const { return 1.0 / (2.0 * pot.lipschitz_grad + spectrum.lambda1()); }

  void validate() const {
    require(dt > 0, "SimConfig: dt must be positive");
    require(t_max >= dt || pot.is_zero(), "SimConfig: t_max must be >= dt");
    if (!pot.is_zero())
      require(dt <= stability_limit() * (1 + 1e-12),
              "SimConfig: dt exceeds the stability guard 1/(2 L + lambda_1) = " + std::to_string(stability_limit()));
    if (const auto* p = std::get_if<PointStart>(&initial))
      require(p->x.size() == spectrum.dim(), "SimConfig: initial point has wrong dimension");
  }

  std::uint64_t hash() const {
    std::uint64_t h = mix64(seed);
    auto fold = [&h](double v) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = mix64(h ^ bits);
    };
    fold(dt);
    fold(t_max);
    fold(static_cast<double>(spectrum.dim()));
    for (double l : spectrum.retained()) fold(l);
    fold(static_cast<double>(static_cast<int>(pot.kind)));
    fold(pot.cap);
    return h;
  }
};

struct PathSample {
  std::vector<double> times;
  PointCloud states;
  std::uint64_t config_hash = 0;

  std::size_t size() const { return times.size(); }
  std::span<const double> state(std::size_t k) const { return states[k]; }

  /// Index of the state recorded at time t (within a relative tolerance).
  std::size_t index_of(double t, double rel_tol = 1e-9) const {
    const double tol = rel_tol * std::max(1.0, std::abs(t));
    auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it == times.end() || std::abs(*it - t) > tol)
      throw RangeError("path has no state at time " + std::to_string(t));
    return static_cast<std::size_t>(it - times.begin());
  }
};

/// Raised when a simulated coordinate becomes non-finite.
struct SimulationDiverged : NumericalError {
  using NumericalError::NumericalError;
};

/// Per-mode coefficients of one transition of length h.
struct StepCoefficients {
  std::vector<double> decay;       // e^{-lambda h}
  std::vector<double> drift_gain;  // (1 - e^{-lambda h}) / lambda
  std::vector<double> noise_sd;    // sqrt((1 - e^{-2 lambda h}) / lambda)

  StepCoefficients(std::span<const double> lambdas, double h)
      : decay(lambdas.size()), drift_gain(lambdas.size()), noise_sd(lambdas.size()) {
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const double l = lambdas[i];
      decay[i] = std::exp(-l * h);
      drift_gain[i] = -std::expm1(-l * h) / l;
      noise_sd[i] = std::sqrt(-std::expm1(-2.0 * l * h) / l);
    }
  }
};

namespace detail {

inline void ou_apply(const StepCoefficients& c, std::span<double> x, std::span<const double> noise) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.decay[i] * x[i] + c.noise_sd[i] * noise[i];
}

inline void exp_euler_apply(const StepCoefficients& c, std::span<double> x, std::span<const double> grad,
                            std::span<const double> noise) {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = (c.decay[i] * x[i] + c.drift_gain[i] * grad[i]) + c.noise_sd[i] * noise[i];
}

}  // namespace detail

/// Exact transition of the V = 0 dynamics over time h: mode i maps to
/// e^{-lambda_i h} x_i + sqrt((1 - e^{-2 lambda_i h}) / lambda_i) noise_i.
inline std::vector<double> ou_step(const SpectrumModel& spec, std::span<const double> x, double h,
                                   std::span<const double> noise) {
  require(h > 0, "ou_step: h must be positive");
  require(x.size() == spec.dim() && noise.size() == spec.dim(), "ou_step: dimension mismatch");
  std::vector<double> out(x.begin(), x.end());
  detail::ou_apply(StepCoefficients(spec.retained(), h), out, noise);
  return out;
}

/// One exponential Euler step of length cfg.dt.
inline std::vector<double> exp_euler_step(const SimConfig& cfg, std::span<const double> x,
                                          std::span<const double> noise) {
  require(x.size() == cfg.spectrum.dim() && noise.size() == cfg.spectrum.dim(), "exp_euler_step: dimension mismatch");
  if (!cfg.pot.is_zero())
    require(cfg.dt <= cfg.stability_limit() * (1 + 1e-12), "exp_euler_step: dt exceeds the stability guard");
  std::vector<double> out(x.begin(), x.end());
  const auto grad = cfg.pot.gradient(x);
  detail::exp_euler_apply(StepCoefficients(cfg.spectrum.retained(), cfg.dt), out, grad, noise);
  if (!all_finite(out)) throw SimulationDiverged("exp_euler_step: non-finite state");
  return out;
}

namespace detail {

inline void draw_mu0(std::span<const double> lambdas, NormalSource& gen, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gen() / std::sqrt(lambdas[i]);
}

// Advances x by n exponential Euler steps.
inline void euler_run(const SimConfig& cfg, const StepCoefficients& c, NormalSource& gen, std::span<double> x,
                      std::size_t n, std::size_t& step_counter) {
  const std::size_t d = x.size();
  std::vector<double> grad(d), noise(d);
  for (std::size_t k = 0; k < n; ++k) {
    cfg.pot.grad_v(x, grad);
    gen.fill(noise);
    exp_euler_apply(c, x, grad, noise);
    ++step_counter;
    if (!all_finite(x)) throw SimulationDiverged("simulation diverged at step " + std::to_string(step_counter));
  }
}

}  // namespace detail

/// Burn-in used for a stationary start when V != 0: ten relaxation times of
/// the slowest mode.
inline double stationary_burn_in(const SimConfig& cfg) { return 10.0 / cfg.spectrum.lambda1(); }

/// Simulates the path and records the states at `sample_times` (time 0 is
/// always recorded first). Pure given cfg.seed.
inline PathSample simulate(const SimConfig& cfg, std::span<const double> sample_times) {
  cfg.validate();
  std::vector<double> times;
  times.push_back(0.0);
  for (double t : sample_times) {
    require(t >= 0 && t <= cfg.t_max * (1 + 1e-12), "simulate: sample time outside [0, t_max]");
    require(t >= times.back(), "simulate: sample times must be increasing");
    if (t > times.back()) times.push_back(t);
  }
  const auto lambdas = cfg.spectrum.retained();
  const std::size_t d = lambdas.size();
  NormalSource gen(cfg.seed);
  PathSample path;
  path.config_hash = cfg.hash();
  path.times = times;
  path.states = PointCloud(times.size(), d);

  std::vector<double> x(d);
  std::size_t steps = 0;
  if (const auto* p = std::get_if<PointStart>(&cfg.initial)) {
    x = p->x;
  } else {
    detail::draw_mu0(lambdas, gen, x);
    if (!cfg.pot.is_zero()) {
      const StepCoefficients c(lambdas, cfg.dt);
      const auto n = static_cast<std::size_t>(std::ceil(stationary_burn_in(cfg) / cfg.dt));
      detail::euler_run(cfg, c, gen, x, n, steps);
      steps = 0;
    }
  }
  std::copy(x.begin(), x.end(), path.states[0].begin());

  if (cfg.pot.is_zero()) {
    std::vector<double> noise(d);
    double prev_h = -1.0;
    std::optional<StepCoefficients> coeffs;
    for (std::size_t k = 1; k < times.size(); ++k) {
      const double h = times[k] - times[k - 1];
      if (h > 0) {
        // sample grids are usually uniform; reuse coefficients when h repeats
        if (!coeffs || h != prev_h) {
          coeffs.emplace(lambdas, h);
          prev_h = h;
        }
        gen.fill(noise);
        detail::ou_apply(*coeffs, x, noise);
      }
      std::copy(x.begin(), x.end(), path.states[k].begin());
    }
    return path;
  }

  const StepCoefficients c(lambdas, cfg.dt);
  std::size_t grid_index = 0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const auto target = static_cast<std::size_t>(std::llround(times[k] / cfg.dt));
    if (target > grid_index) {
      detail::euler_run(cfg, c, gen, x, target - grid_index, steps);
      grid_index = target;
    }
    std::copy(x.begin(), x.end(), path.states[k].begin());
  }
  return path;
}

inline PathSample simulate(const SimConfig& cfg, std::initializer_list<double> sample_times) {
  return simulate(cfg, std::span<const double>(sample_times.begin(), sample_times.size()));
}

// Moment bound ------------------------------------------------------------------------

struct MomentEntry {
  double x_norm = 0.0;
  double sup_simulated = 0.0;
  double sup_stderr = 0.0;
  double sup_closed = std::numeric_limits<double>::quiet_NaN();  // V = 0 only
  double margin = 0.0;                                            // k (1 + |x|^2) - sup
};

struct MomentReport {
  std::vector<MomentEntry> entries;
  double k = 0.0;
  bool closed_form = false;  // k fitted from the exact V = 0 second moments
  std::size_t replicas = 0;
  bool certified() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.margin >= 0; });
  }
};

/// E|X_t|^2 from X_0 = x for V = 0: sum_i e^{-2 lambda_i t} x_i^2 + (1 - e^{-2 lambda_i t}) / lambda_i.
inline double ou_second_moment(std::span<const double> lambdas, std::span<const double> x, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double q = std::exp(-2.0 * lambdas[i] * t);
    s += q * x[i] * x[i] - std::expm1(-2.0 * lambdas[i] * t) / lambdas[i];
  }
  return s;
}

/// Estimates sup_{t <= horizon} E^x |X_t|^2 for starts x = |x| e_1 and fits the
/// smallest k with sup <= k (1 + |x|^2) across the tested norms.
inline MomentReport moment_bound_check(const SimConfig& cfg, std::span<const double> x0_norms, double horizon,
                                       std::size_t replicas, std::size_t n_times = 64, unsigned threads = 1) {
  require(cfg.pot.growth_theta < cfg.spectrum.lambda1(),
          "moment_bound_check: growth constant theta must be below lambda_1");
  require(horizon > 0 && replicas >= 1 && n_times >= 2, "moment_bound_check: invalid horizon/replicas");
  const auto lambdas = cfg.spectrum.retained();
  const std::size_t d = lambdas.size();
  std::vector<double> grid(n_times);
  for (std::size_t k = 0; k < n_times; ++k) grid[k] = horizon * static_cast<double>(k) / static_cast<double>(n_times - 1);
  if (!cfg.pot.is_zero()) {
    for (double& t : grid) t = std::round(t / cfg.dt) * cfg.dt;
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    n_times = grid.size();
  }

  MomentReport report;
  report.replicas = replicas;
  report.closed_form = cfg.pot.is_zero();
  for (std::size_t n = 0; n < x0_norms.size(); ++n) {
    std::vector<double> x0(d, 0.0);
    x0[0] = x0_norms[n];
    std::vector<std::vector<double>> sq(replicas, std::vector<double>(n_times));
    parallel_for(replicas, threads, [&](std::size_t r) {
      SimConfig c = cfg;
      c.t_max = std::max(cfg.t_max, horizon);
      c.initial = PointStart{x0};
      c.seed = derive_seed(cfg.seed, n, r);
      const auto path = simulate(c, std::span<const double>(grid).subspan(1));
      for (std::size_t k = 0; k < n_times; ++k) sq[r][k] = squared_norm(path.state(k));
    });
    MomentEntry e;
    e.x_norm = x0_norms[n];
    for (std::size_t k = 0; k < n_times; ++k) {
      RunningStats s;
      for (std::size_t r = 0; r < replicas; ++r) s.add(sq[r][k]);
      if (k == 0 || s.mean() > e.sup_simulated) {
        e.sup_simulated = s.mean();
        e.sup_stderr = replicas > 1 ? s.stderr_mean() : 0.0;
      }
    }
    if (report.closed_form) {
      e.sup_closed = 0.0;
      for (double t : grid) e.sup_closed = std::max(e.sup_closed, ou_second_moment(lambdas, x0, t));
    }
    report.entries.push_back(e);
  }
  for (const auto& e : report.entries) {
    const double sup = report.closed_form ? e.sup_closed : e.sup_simulated;
    report.k = std::max(report.k, sup / (1.0 + e.x_norm * e.x_norm));
  }
  // one ulp of headroom so the binding norm certifies with margin >= 0
  report.k *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon();
  for (auto& e : report.entries) {
    const double sup = report.closed_form ? e.sup_closed : e.sup_simulated;
    e.margin = report.k * (1.0 + e.x_norm * e.x_norm) - sup;
  }
  return report;
}

}  // namespace spdelab
