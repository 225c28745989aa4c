#pragma once

// The reference Gaussian measure mu_0 = N(0, A^-1), the invariant measure
// mu = Z_V^-1 e^V mu_0, small-ball probabilities and the on-diagonal heat
// kernel majorant c(t, x).

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/potential.hpp"
#include "spdelab/simulator.hpp"
#include "spdelab/spectrum.hpp"

namespace spdelab {

/// Centered Gaussian with covariance A^-1: mode i has variance 1/lambda_i.
struct GaussianMeasure {
  SpectrumModel spectrum;

  std::size_t dim() const { return spectrum.dim(); }
  double variance(std::size_t i) const { return 1.0 / spectrum.retained()[i]; }
};

struct InvariantMeasure {
  GaussianMeasure base;
  PotentialModel pot = builtin_zero();
  Estimate z_v{1.0, 0.0, 0};

  std::size_t dim() const { return base.dim(); }
  const SpectrumModel& spectrum() const { return base.spectrum; }
};

/// Builds mu for the given potential; Z_V is exactly 1 for V = 0 and a
/// Monte Carlo estimate over `n_mc` draws of mu_0 otherwise.
inline InvariantMeasure make_invariant(const SpectrumModel& spec, PotentialModel pot, std::size_t n_mc = 20000,
                                       std::uint64_t seed = 7) {
  InvariantMeasure m{GaussianMeasure{spec}, std::move(pot), {1.0, 0.0, 0}};
  if (!m.pot.is_zero()) {
    NormalSource gen(seed);
    RunningStats s;
    std::vector<double> x(spec.dim());
    for (std::size_t k = 0; k < n_mc; ++k) {
      detail::draw_mu0(spec.retained(), gen, x);
      s.add(std::exp(m.pot.v(x)));
    }
    m.z_v = {s.mean(), s.stderr_mean(), n_mc};
  }
  return m;
}

inline PointCloud sample_mu0(const GaussianMeasure& m, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample_mu0: n must be >= 1");
  PointCloud out(n, m.dim());
  NormalSource gen(seed);
  for (std::size_t k = 0; k < n; ++k) detail::draw_mu0(m.spectrum.retained(), gen, out[k]);
  return out;
}

struct MuSample {
  PointCloud points;
  bool approximate = false;  // true when drawn from a simulated chain
};

/// Draws from mu. For V = 0 this is sample_mu0 (exact). Otherwise a single
/// stationary chain is run with exponential Euler: burn_in, then one sample
/// every `thin` time units.
inline MuSample sample_mu(const InvariantMeasure& m, std::size_t n, std::uint64_t seed, double burn_in = 0.0,
                          double thin = 0.0) {
  require(n >= 1, "sample_mu: n must be >= 1");
  if (m.pot.is_zero()) return {sample_mu0(m.base, n, seed), false};
  require(burn_in > 0 && thin > 0, "sample_mu: burn_in and thin must be positive for V != 0");
  SimConfig cfg{m.spectrum(), m.pot};
  cfg.dt = std::min(0.01, cfg.stability_limit());
  const auto per_sample = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(thin / cfg.dt)));
  const auto burn = static_cast<std::size_t>(std::ceil(burn_in / cfg.dt));
  cfg.t_max = cfg.dt * static_cast<double>(burn + per_sample * n);
  cfg.seed = seed;
  cfg.initial = StationaryStart{};
  NormalSource gen(seed);
  std::vector<double> x(m.dim());
  detail::draw_mu0(m.spectrum().retained(), gen, x);
  const StepCoefficients c(m.spectrum().retained(), cfg.dt);
  std::size_t steps = 0;
  detail::euler_run(cfg, c, gen, x, burn, steps);
  PointCloud out(n, m.dim());
  for (std::size_t k = 0; k < n; ++k) {
    detail::euler_run(cfg, c, gen, x, per_sample, steps);
    std::copy(x.begin(), x.end(), out[k].begin());
  }
  return {std::move(out), true};
}

// Small balls -----------------------------------------------------------------------

/// mu(B(0, r)) under the truncation. `optimistic` decides membership on the
/// retained modes only; `pessimistic` adds the full tail variance
/// sum_{i > d} 1/lambda_i to |x|^2. The two bracket the untruncated value.
struct SmallBallEstimate {
  double r = 0.0;
  double optimistic = 0.0;
  double pessimistic = 0.0;
  double std_error = 0.0;  // binomial standard error of `optimistic`
  std::size_t n = 0;
  bool approximate = false;  // V != 0: center-0 heuristic and chain samples
};

inline double truncation_tail_variance(const SpectrumModel& spec) {
  if (spec.kind() == SpectrumKind::Explicit && spec.dim() == spec.available()) return 0.0;
  const auto tail = spec.reciprocal_tail(spec.dim() + 1);
  return tail.value + tail.error_bound;
}

inline std::vector<SmallBallEstimate> small_ball_table(const InvariantMeasure& m, std::span<const double> radii,
                                                       std::size_t n, std::uint64_t seed) {
  if (n < 100) throw PreconditionError("small_ball: need n >= 100 samples for a standard error");
  for (double r : radii) require(r >= 0, "small_ball: radius must be nonnegative");
  const auto sample = m.pot.is_zero() ? MuSample{sample_mu0(m.base, n, seed), false}
                                      : sample_mu(m, n, seed, stationary_burn_in(SimConfig{m.spectrum(), m.pot}), 1.0);
  std::vector<double> norms(n);
  for (std::size_t k = 0; k < n; ++k) norms[k] = squared_norm(sample.points[k]);
  std::sort(norms.begin(), norms.end());
  const double tail = truncation_tail_variance(m.spectrum());
  std::vector<SmallBallEstimate> out;
  for (double r : radii) {
    SmallBallEstimate e;
    e.r = r;
    e.n = n;
    e.approximate = sample.approximate;
    const double r2 = r * r;
    const auto inside = static_cast<double>(std::lower_bound(norms.begin(), norms.end(), r2) - norms.begin());
    const auto inside_pess =
        static_cast<double>(std::lower_bound(norms.begin(), norms.end(), r2 - tail) - norms.begin());
    const double nn = static_cast<double>(n);
    e.optimistic = inside / nn;
    e.pessimistic = r2 > tail ? inside_pess / nn : 0.0;
    e.std_error = std::sqrt(e.optimistic * (1 - e.optimistic) / nn);
    out.push_back(e);
  }
  return out;
}

/// Monte Carlo mu(B(0, r)), used as psi(r) (the supremum over centers is
/// attained at 0 for the centered Gaussian).
inline SmallBallEstimate small_ball(const InvariantMeasure& m, double r, std::size_t n, std::uint64_t seed) {
  require(r >= 0, "small_ball: radius must be nonnegative");
  const double radii[] = {r};
  return small_ball_table(m, radii, n, seed).front();
}

/// Monotone table r -> psi(r).
struct PsiTable {
  std::vector<double> r;
  std::vector<double> psi;

  static PsiTable from_estimates(std::span<const SmallBallEstimate> est, bool optimistic = true) {
    PsiTable t;
    for (const auto& e : est) {
      t.r.push_back(e.r);
      t.psi.push_back(optimistic ? e.optimistic : e.pessimistic);
    }
    return t;
  }

  void validate() const {
    require(!r.empty() && r.size() == psi.size(), "psi table: empty or ragged");
    for (std::size_t i = 1; i < r.size(); ++i) {
      require(r[i] > r[i - 1], "psi table: radii must be strictly increasing");
      require(psi[i] >= psi[i - 1], "psi table: psi must be nondecreasing");
    }
  }
};

/// psi^{-1}(s) = sup{r >= 0 : psi(r) <= s}, linear between knots. Returns 0
/// below the table's first value and refuses to extrapolate above its last.
inline double psi_inverse(const PsiTable& table, double s) {
  table.validate();
  const auto& r = table.r;
  const auto& psi = table.psi;
  if (s < psi.front()) return 0.0;
  if (s > psi.back()) throw RangeError("psi_inverse: s above the table maximum (extrapolation refused)");
  // last knot with psi <= s
  const auto j = static_cast<std::size_t>(std::upper_bound(psi.begin(), psi.end(), s) - psi.begin()) - 1;
  if (j + 1 == psi.size() || psi[j] == s) return r[j];
  const double w = (s - psi[j]) / (psi[j + 1] - psi[j]);
  return r[j] + w * (r[j + 1] - r[j]);
}

/// Upper bound for log(psi(r) / C_1) for lambda_i = c0 i^p: the minimum over
/// R >= R_min of R r^2 - c2 R^{1/p}, with
///   c2 = c0^{-1/p} pi / (4 p sin(pi / p)),   R_min = max(1, (2 c2)^{-p}),
/// capped at 0. For small r the minimizer is interior and the value is
/// exactly -c2 (1 - 1/p) (c2 / (p r^2))^{1/(p-1)}, proportional to r^{-2/(p-1)}.
inline double small_ball_log_bound(const SpectrumModel& spec, double r) {
  if (spec.kind() != SpectrumKind::PowerLaw || spec.exponent() <= 1.0)
    throw PreconditionError("small_ball_log_bound: requires a power-law spectrum with p > 1");
  require(r > 0, "small_ball_log_bound: r must be positive");
  if (r >= 1.0) return 0.0;
  const double p = spec.exponent();
  const double c0 = spec.coefficient();
  // (1/2) sum_i R / (lambda_i + R) >= (1/2) int_1^inf R ds / (c0 s^p + R)
  //   >= 2 c2 R^{1/p} - 1/2, and 2 c2 R^{1/p} - 1/2 >= c2 R^{1/p} once R >= R_min.
  const double c2 = std::pow(c0, -1.0 / p) * std::numbers::pi / (4.0 * p * std::sin(std::numbers::pi / p));
  const double r_min = std::max(1.0, std::pow(2.0 * c2, -p));
  const double interior = std::pow(c2 / (p * r * r), p / (p - 1.0));
  const double big_r = std::max(interior, r_min);
  return std::min(0.0, big_r * r * r - c2 * std::pow(big_r, 1.0 / p));
}

// Heat kernel majorant -----------------------------------------------------------

struct HeatKernelValue {
  double value = 0.0;      // product over the retained modes
  double log_value = 0.0;  // its logarithm
  double smoothing = 0.0;  // 2K / (1 - e^{-2Kt}), or 1/t at K = 0
  double tail_log_bound = 0.0;  // bound on the log-contribution of modes > d at x_i = 0
};

inline double heat_kernel_smoothing(double k_const, double t) {
  require(t > 0, "heat_kernel_majorant: t must be positive");
  if (k_const == 0.0) return 1.0 / t;
  return 2.0 * k_const / (-std::expm1(-2.0 * k_const * t));
}

/// c(t, x) = prod_i sqrt((2 s + lambda_i) / lambda_i) exp(s lambda_i x_i^2 / (2 s + lambda_i))
/// with s = 2K / (1 - e^{-2Kt}): the inverse of int exp(-s |x - y|^2) mu_0(dy), V = 0.
inline HeatKernelValue heat_kernel_majorant(const SpectrumModel& spec, double k_const, double t,
                                            std::span<const double> x) {
  require(x.size() == spec.dim(), "heat_kernel_majorant: x must have the truncation length");
  HeatKernelValue out;
  const double s = heat_kernel_smoothing(k_const, t);
  out.smoothing = s;
  const auto lam = spec.retained();
  double log_sum = 0.0;
  for (std::size_t i = 0; i < lam.size(); ++i) {
    const double term = 0.5 * std::log1p(2.0 * s / lam[i]) + s * lam[i] * x[i] * x[i] / (2.0 * s + lam[i]);
    if (!std::isfinite(term)) throw NumericalError("heat_kernel_majorant: non-finite factor at mode " + std::to_string(i + 1));
    log_sum += term;
  }
  out.log_value = log_sum;
  out.value = std::exp(log_sum);
  if (!std::isfinite(out.value))
    throw NumericalError("heat_kernel_majorant: product overflows (log = " + std::to_string(log_sum) + ")");
  // (1/2) log(1 + 2 s / l) <= s / l
  if (!(spec.kind() == SpectrumKind::Explicit && spec.dim() == spec.available())) {
    const auto tail = spec.reciprocal_tail(spec.dim() + 1);
    out.tail_log_bound = s * (tail.value + tail.error_bound);
    if (!std::isfinite(out.tail_log_bound))
      throw NumericalError("heat_kernel_majorant: tail beyond mode " + std::to_string(spec.dim()) + " diverges");
  }
  return out;
}

/// Both sides of the integrability estimate
///   int mu(dx) / int e^{-l |x - y|^2} mu(dy)
///     <= e^{gamma(k l)} prod_i (lambda_i + k l) / sqrt(lambda_i^2 - lambda_1^2 / 2)
/// over the retained modes. The constant k is user supplied; this is a report,
/// not an assertion.
struct IntegrabilityReport {
  double lambda = 0.0;
  double k = 0.0;
  Estimate lhs_mc;
  double lhs_closed = std::numeric_limits<double>::quiet_NaN();  // V = 0: prod (1 + 2 l / lambda_i)
  double rhs = 0.0;
  bool holds() const {
    const double lhs = std::isfinite(lhs_closed) ? lhs_closed : lhs_mc.value;
    return lhs <= rhs;
  }
};

inline IntegrabilityReport integrability_report(const InvariantMeasure& m, double lambda, double k, std::size_t n,
                                                std::uint64_t seed) {
  require(lambda >= 1 && k > 0 && n >= 2, "integrability_report: need lambda >= 1, k > 0, n >= 2");
  const auto lam = m.spectrum().retained();
  IntegrabilityReport rep;
  rep.lambda = lambda;
  rep.k = k;
  double log_rhs = m.pot.gamma(k * lambda);
  const double l1 = lam[0];
  for (double li : lam) log_rhs += std::log(li + k * lambda) - 0.5 * std::log(li * li - 0.5 * l1 * l1);
  rep.rhs = std::exp(log_rhs);
  if (m.pot.is_zero()) {
    double log_lhs = 0.0;
    for (double li : lam) log_lhs += std::log1p(2.0 * lambda / li);
    rep.lhs_closed = std::exp(log_lhs);
    // Monte Carlo of the same integrand (closed-form inner integral).
    const auto xs = sample_mu0(m.base, n, seed);
    RunningStats s;
    for (std::size_t j = 0; j < n; ++j) s.add(heat_kernel_majorant(m.spectrum(), 0.0, 1.0 / lambda, xs[j]).value);
    rep.lhs_mc = {s.mean(), s.stderr_mean(), n};
  } else {
    // nested Monte Carlo: outer x ~ mu, inner y ~ mu
    const auto xs = sample_mu(m, n, seed, stationary_burn_in(SimConfig{m.spectrum(), m.pot}), 1.0).points;
    const auto ys = sample_mu(m, n, derive_seed(seed, 1), stationary_burn_in(SimConfig{m.spectrum(), m.pot}), 1.0).points;
    RunningStats s;
    for (std::size_t j = 0; j < n; ++j) {
      double inner = 0.0;
      for (std::size_t q = 0; q < n; ++q) inner += std::exp(-lambda * squared_distance(xs[j], ys[q]));
      s.add(static_cast<double>(n) / inner);
    }
    rep.lhs_mc = {s.mean(), s.stderr_mean(), n};
  }
  return rep;
}

}  // namespace spdelab
