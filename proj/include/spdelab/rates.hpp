#pragma once

// Analytic rate curves: the V = 0 closed forms of alpha and beta, the upper
// bounds xi_t and eta_t, the covering lower bound, predicted exponents of
// log t, and least-squares exponent fits on log log t.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/gaussian.hpp"
#include "spdelab/potential.hpp"
#include "spdelab/simulator.hpp"
#include "spdelab/spectrum.hpp"

namespace spdelab {

/// t -> value with an optional fit of log(value) on log(log t).
struct RateCurve {
  std::string label;
  std::vector<double> t_grid;
  std::vector<double> values;
  std::vector<double> std_errors;  // empty for analytic curves
  std::optional<LinearFit> exponent_fit;

  void write_csv(std::ostream& os) const {
    os.precision(17);
    os << "t,value" << (std_errors.empty() ? "" : ",stderr") << '\n';
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      os << t_grid[k] << ',' << values[k];
      if (!std_errors.empty()) os << ',' << std_errors[k];
      os << '\n';
    }
  }

  nlohmann::json meta() const {
    nlohmann::json j{{"label", label}};
    if (exponent_fit)
      j["exponent_fit"] = {{"slope", exponent_fit->slope},
                           {"intercept", exponent_fit->intercept},
                           {"r_squared", exponent_fit->r_squared}};
    return j;
  }
};

/// The unnamed constants of the bounds. Defaults are exact for V = 0.
struct BoundConstants {
  double lambda_0 = 1.0;  // spectral gap
  double k_alpha = 2.0;   // alpha(eps) <= k_alpha h(eps)
  double k_lower = 2.0;   // constant under the square root of the lower bound
  double k_eta = 1.0;     // k in e^{k/eps + gamma(k/eps)}

  static BoundConstants for_spectrum(const SpectrumModel& spec) {
    BoundConstants c;
    c.lambda_0 = spec.lambda1();
    return c;
  }

  void validate() const {
    require(lambda_0 > 0 && k_alpha > 0 && k_lower > 0 && k_eta > 0, "BoundConstants: all constants must be positive");
  }

  nlohmann::json to_json() const {
    return {{"lambda_0", lambda_0}, {"k_alpha", k_alpha}, {"k_lower", k_lower}, {"k_eta", k_eta}};
  }
};

// Closed forms (V = 0) ----------------------------------------------------------

/// alpha(eps) = E|X_0 - X_eps|^2 = sum_i 2 (1 - e^{-lambda_i eps}) / lambda_i.
inline SeriesValue alpha_closed(const SpectrumModel& spec, double eps) {
  require(eps >= 0, "alpha_closed: eps must be nonnegative");
  if (eps == 0) return {0.0, 0.0, false};
  if (spec.kind() == SpectrumKind::PowerLaw && spec.exponent() <= 1.0)
    throw DivergenceError("alpha_closed: series diverges for p <= 1");
  return reciprocal_like_series(spec, 2.0, eps, [eps](double lam) { return -2.0 * std::expm1(-eps * lam) / lam; });
}

/// log beta(eps) = -sum_i log(1 - e^{-2 lambda_i eps}).
inline SeriesValue log_beta_closed(const SpectrumModel& spec, double eps) {
  require(eps > 0, "beta_closed: eps must be positive");
  const double q1 = -std::expm1(-2.0 * spec.lambda1() * eps);
  // -log(1 - q) <= q / (1 - q) <= q / q1 for q <= e^{-2 lambda_1 eps}
  return exponential_like_series(spec, 1.0 / q1, 2.0 * eps,
                                 [eps](double lam) { return -std::log1p(-std::exp(-2.0 * eps * lam)); });
}

/// beta(eps) = prod_i (1 - e^{-2 lambda_i eps})^{-1}.
inline double beta_closed(const SpectrumModel& spec, double eps) {
  const auto lb = log_beta_closed(spec, eps);
  if (lb.value > 700.0) {
    // find the eps at which log beta reaches 700
    double lo = eps, hi = eps;
    while (log_beta_closed(spec, hi).value > 700.0) hi *= 2.0;
    for (int k = 0; k < 60; ++k) {
      const double mid = std::sqrt(lo * hi);
      (log_beta_closed(spec, mid).value > 700.0 ? lo : hi) = mid;
    }
    throw NumericalError("beta_closed: product overflows at eps = " + std::to_string(eps) +
                         "; need eps >= " + std::to_string(hi));
  }
  return std::exp(lb.value);
}

// One-dimensional minimization ----------------------------------------------------

struct Minimum {
  double arg = 0.0;
  double value = 0.0;
};

/// Minimizes f over eps in (lo, hi) on log eps: a coarse log grid brackets
/// the minimum, golden-section refines it. Non-finite values (and thrown
/// NumericalError) count as +infinity.
template <class F>
Minimum minimize_log(F&& f, double lo, double hi, double rel_tol = 1e-6, std::size_t coarse = 241) {
  auto safe = [&](double le) {
    try {
      const double v = f(std::exp(le));
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const double a = std::log(lo), b = std::log(hi);
  std::vector<double> grid(coarse), vals(coarse);
  std::size_t best = 0;
  for (std::size_t k = 0; k < coarse; ++k) {
    grid[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(coarse - 1);
    vals[k] = safe(grid[k]);
    if (vals[k] < vals[best]) best = k;
  }
  if (!std::isfinite(vals[best])) throw NumericalError("minimize: objective is non-finite on the whole interval");
  double x0 = grid[best == 0 ? 0 : best - 1];
  double x3 = grid[std::min(best + 1, coarse - 1)];
  constexpr double invphi = 0.6180339887498949;
  double x1 = x3 - invphi * (x3 - x0), x2 = x0 + invphi * (x3 - x0);
  double f1 = safe(x1), f2 = safe(x2);
  Minimum m{std::exp(grid[best]), vals[best]};
  for (int it = 0; it < 200 && (x3 - x0) > 1e-12; ++it) {
    if (f1 < f2) {
      x3 = x2;
      x2 = x1;
      f2 = f1;
      x1 = x3 - invphi * (x3 - x0);
      f1 = safe(x1);
    } else {
      x0 = x1;
      x1 = x2;
      f1 = f2;
      x2 = x0 + invphi * (x3 - x0);
      f2 = safe(x2);
    }
    const double fm = std::min(f1, f2);
    if (std::isfinite(fm) && std::abs(f1 - f2) <= rel_tol * 1e-3 * std::abs(fm) && (x3 - x0) < rel_tol) break;
  }
  if (f1 < m.value) m = {std::exp(x1), f1};
  if (f2 < m.value) m = {std::exp(x2), f2};
  return m;
}

// Upper bounds -------------------------------------------------------------------

/// Smallest eps examined by the infima over (0, 1).
inline constexpr double kEpsFloor = 1e-12;

/// xi_t = inf_{eps in (0,1)} 16 beta(eps) / (lambda_0 t) + 2 alpha(eps).
inline Minimum xi_t_argmin(const SpectrumModel& spec, const BoundConstants& consts, double t) {
  consts.validate();
  require(t > 0, "xi_t: t must be positive");
  auto objective = [&](double eps) {
    const double lb = log_beta_closed(spec, eps).value;
    return 16.0 * std::exp(lb - std::log(consts.lambda_0 * t)) + 2.0 * alpha_closed(spec, eps).value;
  };
  // The first factor alone gives F(eps) >= 16 / (lambda_0 t (1 - e^{-2 lambda_1 eps})),
  // so no eps below the root of that bound = F(1) can be the minimizer.
  double lo = kEpsFloor;
  const double q = 16.0 / (consts.lambda_0 * t * objective(1.0));
  if (q < 1.0) lo = std::max(lo, -std::log1p(-q) / (2.0 * spec.lambda1()));
  return minimize_log(objective, std::min(lo, 0.5), 1.0);
}

inline double xi_t(const SpectrumModel& spec, const BoundConstants& consts, double t) {
  return xi_t_argmin(spec, consts, t).value;
}

/// eta_t = inf_{eps in (0,1)} (1/t) e^{k/eps + gamma(k/eps)} + h(eps), with c_0 = 1.
inline Minimum eta_t_argmin(const SpectrumModel& spec, const std::function<double(double)>& gamma, double k_const,
                            double t) {
  require(t > 1, "eta_t: t must be > 1");
  require(k_const > 0, "eta_t: k must be positive");
  require(static_cast<bool>(gamma), "eta_t: gamma is required");
  const double log_t = std::log(t);
  auto objective = [&](double eps) {
    const double s = k_const / eps;
    return std::exp(s + gamma(s) - log_t) + series_h(spec, eps).value;
  };
  // gamma >= 0 (it majorizes 2|V(0)|), so F(eps) >= e^{k/eps} / t and the
  // minimizer satisfies eps >= k / log(t F(1)).
  double lo = kEpsFloor;
  const double bound = log_t + std::log(objective(1.0));
  if (bound > 0) lo = std::max(lo, k_const / bound);
  return minimize_log(objective, std::min(lo, 0.5), 1.0);
}

inline double eta_t(const SpectrumModel& spec, const PotentialModel& pot, double k_const, double t) {
  return eta_t_argmin(spec, pot.gamma, k_const, t).value;
}

/// Conditional bound for a fixed start x:
///   inf_{r in r_grid} (8 r / t) sup_s E^x|X_s|^2 + 2 c(r, x) xi_t.
inline Minimum a2_bound(const SpectrumModel& spec, double k_const, std::span<const double> x, double xi, double sup_moment,
                        double t, std::span<const double> r_grid) {
  require(!r_grid.empty(), "a2_bound: empty r grid");
  Minimum best{0.0, std::numeric_limits<double>::infinity()};
  for (double r : r_grid) {
    double c;
    try {
      c = heat_kernel_majorant(spec, k_const, r, x).value;
    } catch (const NumericalError&) {
      continue;
    }
    const double v = 8.0 * r / t * sup_moment + 2.0 * c * xi;
    if (v < best.value) best = {r, v};
  }
  return best;
}

// Lower bound ----------------------------------------------------------------------

struct LowerBoundValue {
  double value = 0.0;
  std::size_t argmax_n = 1;
  double unclipped = 0.0;
};

/// Covering size N = 1 + ceil(t)^2, always added to the N sweep.
inline std::size_t covering_choice_n(double t) {
  const double c = std::ceil(t);
  return static_cast<std::size_t>(1.0 + c * c);
}

/// max over N in {1..n_max} and N = 1 + ceil(t)^2 of
///   psi^{-1}(1/(2N)) / 2 - sqrt(k_lower h(t / N)),
/// clipped at 0. With a capped metric |x - y| ^ cap, balls of radius >= cap
/// are the whole space, so psi^{-1} is clipped at the cap.
inline LowerBoundValue lower_bound_curve(const PsiTable& psi, const SpectrumModel& spec, const BoundConstants& consts,
                                         double t, std::size_t n_max, std::optional<double> metric_cap = {}) {
  consts.validate();
  require(t > 1, "lower_bound_curve: t must be > 1");
  require(n_max >= 1, "lower_bound_curve: n_max must be >= 1");
  std::vector<std::size_t> ns;
  for (std::size_t n = 1; n <= n_max; ++n) ns.push_back(n);
  ns.push_back(covering_choice_n(t));
  LowerBoundValue out;
  out.unclipped = -std::numeric_limits<double>::infinity();
  for (std::size_t n : ns) {
    const double nn = static_cast<double>(n);
    double r = psi_inverse(psi, 1.0 / (2.0 * nn));
    if (metric_cap) r = std::min(r, *metric_cap);
    const double v = 0.5 * r - std::sqrt(consts.k_lower * series_h(spec, t / nn).value);
    if (v > out.unclipped) {
      out.unclipped = v;
      out.argmax_n = n;
    }
  }
  out.value = std::max(0.0, out.unclipped);
  return out;
}

// Exponents ------------------------------------------------------------------------

enum class RateRegime {
  UpperW2Power,        // E W_2^2 <= (log t)^{1/p - 1}
  UpperW2Exponential,  // lambda_i = c e^{i^p}: (log t)^{-1} times a log log factor
  LowerCappedW1,       // E W~_1 >= (log t)^{-((p - 1)/2 ^ 1)}
  LowerW2,             // E W_2^2 >= (log t)^{1 - p ^ 3}
};

struct PredictedExponent {
  double log_t = 0.0;
  /// Power of log log t in the exponential regime: as stated, and as proved.
  std::optional<double> loglog_statement;
  std::optional<double> loglog_proof;
};

inline PredictedExponent predicted_exponent(RateRegime regime, double p) {
  switch (regime) {
    case RateRegime::UpperW2Power:
      require(p > 1, "predicted_exponent: power-law regimes need p > 1");
      return {1.0 / p - 1.0, {}, {}};
    case RateRegime::UpperW2Exponential:
      require(p > 0, "predicted_exponent: exponential regime needs p > 0");
      return {-1.0, 1.0, 1.0 / p};
    case RateRegime::LowerCappedW1:
      require(p > 1, "predicted_exponent: power-law regimes need p > 1");
      return {-std::min((p - 1.0) / 2.0, 1.0), {}, {}};
    case RateRegime::LowerW2:
      require(p > 1, "predicted_exponent: power-law regimes need p > 1");
      return {1.0 - std::min(p, 3.0), {}, {}};
  }
  throw PreconditionError("predicted_exponent: unknown regime");
}

/// OLS of log(value) on log(log t); stored in the curve.
inline LinearFit fit_exponent(RateCurve& curve) {
  require(curve.t_grid.size() == curve.values.size(), "fit_exponent: ragged curve");
  if (curve.t_grid.size() < 4) throw PreconditionError("fit_exponent: need at least 4 points");
  std::vector<double> x, y;
  for (std::size_t k = 0; k < curve.t_grid.size(); ++k) {
    require(curve.t_grid[k] > std::numbers::e, "fit_exponent: every t must exceed e");
    require(curve.values[k] > 0, "fit_exponent: values must be positive");
    x.push_back(std::log(std::log(curve.t_grid[k])));
    y.push_back(std::log(curve.values[k]));
  }
  const auto fit = least_squares(x, y);
  curve.exponent_fit = fit;
  return fit;
}

/// Grid e^{lo}, e^{lo+1}, ..., e^{hi}.
inline std::vector<double> exp_grid(int lo, int hi) {
  require(hi >= lo, "exp_grid: hi < lo");
  std::vector<double> g;
  for (int k = lo; k <= hi; ++k) g.push_back(std::exp(static_cast<double>(k)));
  return g;
}

inline RateCurve xi_curve(const SpectrumModel& spec, const BoundConstants& consts, std::span<const double> t_grid) {
  RateCurve c{"xi_t", {t_grid.begin(), t_grid.end()}, {}, {}, {}};
  for (double t : t_grid) c.values.push_back(xi_t(spec, consts, t));
  return c;
}

inline RateCurve eta_curve(const SpectrumModel& spec, const std::function<double(double)>& gamma, double k_const,
                           std::span<const double> t_grid) {
  RateCurve c{"eta_t", {t_grid.begin(), t_grid.end()}, {}, {}, {}};
  for (double t : t_grid) c.values.push_back(eta_t_argmin(spec, gamma, k_const, t).value);
  return c;
}

inline RateCurve lower_curve(const PsiTable& psi, const SpectrumModel& spec, const BoundConstants& consts,
                             std::span<const double> t_grid, std::size_t n_max, std::optional<double> metric_cap = {}) {
  RateCurve c{"lower_bound", {t_grid.begin(), t_grid.end()}, {}, {}, {}};
  for (double t : t_grid) c.values.push_back(lower_bound_curve(psi, spec, consts, t, n_max, metric_cap).value);
  return c;
}

// Spectral gap for V != 0 --------------------------------------------------------------

/// lambda_0 from the lag-tau autocorrelation of mode 1 of a stationary run:
/// rho(tau) = e^{-lambda_0 tau}. The standard error comes from `batches`
/// independent runs.
inline Estimate estimate_spectral_gap(const SimConfig& base, double tau, std::size_t samples, std::size_t batches) {
  require(tau > 0 && samples >= 16 && batches >= 2, "estimate_spectral_gap: need tau > 0, samples >= 16, batches >= 2");
  std::vector<double> gaps;
  for (std::size_t b = 0; b < batches; ++b) {
    SimConfig cfg = base;
    cfg.seed = derive_seed(base.seed, 0x9a9, b);
    cfg.initial = StationaryStart{};
    std::vector<double> times(samples);
    for (std::size_t k = 0; k < samples; ++k) times[k] = tau * static_cast<double>(k + 1);
    if (!cfg.pot.is_zero())
      for (double& t : times) t = std::max(cfg.dt, std::round(t / cfg.dt) * cfg.dt);
    cfg.t_max = times.back();
    const auto path = simulate(cfg, times);
    std::vector<double> x(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) x[k] = path.state(k)[0];
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double c0 = 0, c1 = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      c0 += (x[k] - mean) * (x[k] - mean);
      if (k + 1 < x.size()) c1 += (x[k] - mean) * (x[k + 1] - mean);
    }
    const double rho = c1 / c0;
    if (rho > 0 && rho < 1) gaps.push_back(-std::log(rho) / tau);
  }
  if (gaps.size() < 2) throw NumericalError("estimate_spectral_gap: autocorrelation not in (0, 1); choose a shorter lag");
  return summarize(gaps);
}

}  // namespace spdelab
