#pragma once

// The nonlinearity V of the drift grad V(x) - A x, bundled with the constants
// that the structural hypotheses and the rate bounds consume.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/spectrum.hpp"

namespace spdelab {

enum class PotentialKind { Zero, BoundedLinear, Custom };

struct PotentialModel {
  PotentialKind kind = PotentialKind::Zero;
  std::function<double(std::span<const double>)> v;
  /// Writes grad V(x) into out (same length as x).
  std::function<void(std::span<const double>, std::span<double>)> grad_v;
  double lipschitz_grad = 0.0;
  /// K in <grad V(x) - grad V(y), x - y> <= (K + lambda_1)|x - y|^2.
  double one_sided_k = 0.0;
  /// (c, theta) in |grad V(x)| <= c + theta |x|.
  double growth_c = 0.0;
  double growth_theta = 0.0;
  /// gamma in |V(x)| <= (gamma(1/eps) + eps |x|^2) / 2.
  std::function<double(double)> gamma;
  /// Coefficients and cap of the bounded tanh model (empty otherwise).
  std::vector<double> coefficients;
  double cap = 0.0;

  bool is_zero() const { return kind == PotentialKind::Zero; }

  std::vector<double> gradient(std::span<const double> x) const {
    std::vector<double> g(x.size(), 0.0);
    grad_v(x, g);
    return g;
  }
};

/// V = 0, the case in which every closed form of the library is exact.
inline PotentialModel builtin_zero() {
  PotentialModel pot;
  pot.kind = PotentialKind::Zero;
  pot.v = [](std::span<const double>) { return 0.0; };
  pot.grad_v = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  pot.gamma = [](double) { return 0.0; };
  return pot;
}

/// V(x) = cap * sum_i a_i tanh(x_i) / sum_i |a_i|. Smooth, |V| <= cap, with
/// bounded Lipschitz gradient; satisfies |V(x)| <= cap (1 + |x|), the growth
/// bound with theta = 0 and the gamma bound with constant gamma = 2 cap.
inline PotentialModel builtin_bounded_linear(std::vector<double> a, double cap) {
  require(cap > 0, "bounded_linear: cap must be positive");
  double l1 = 0.0, l2 = 0.0, linf = 0.0;
  for (double ai : a) {
    l1 += std::abs(ai);
    l2 += ai * ai;
    linf = std::max(linf, std::abs(ai));
  }
  if (!(l1 > 0)) throw PreconditionError("bounded_linear: coefficient vector is all zero");
  l2 = std::sqrt(l2);

  PotentialModel pot;
  pot.kind = PotentialKind::BoundedLinear;
  pot.coefficients = a;
  pot.cap = cap;
  const double scale = cap / l1;
  std::vector<double> w(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) w[i] = scale * a[i];
  pot.v = [w](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * std::tanh(x[i]);
    return s;
  };
  pot.grad_v = [w](std::span<const double> x, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double c = std::cosh(x[i]);
      out[i] = w[i] / (c * c);
    }
  };
  // max |d/du sech^2 u| = max |2 tanh u sech^2 u| = 4 / (3 sqrt 3)
  const double sech2_slope = 4.0 / (3.0 * std::sqrt(3.0));
  pot.lipschitz_grad = scale * linf * sech2_slope;
  pot.one_sided_k = pot.lipschitz_grad;
  pot.growth_c = scale * l2;
  pot.growth_theta = 0.0;
  pot.gamma = [cap](double) { return 2.0 * cap; };
  return pot;
}

struct HypothesisCheck {
  std::string name;
  bool passed = true;
  std::size_t violations = 0;
  double worst_margin = 0.0;  // min over samples of (bound - observed)
};

struct HypothesisReport {
  std::vector<HypothesisCheck> checks;
  Estimate z_v;  // Monte Carlo estimate of mu_0(e^V)
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const HypothesisCheck& at(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw RangeError("hypothesis report: no check named " + name);
  }
};

namespace detail {

inline void sample_in_ball(NormalSource& gen, double radius, std::span<double> out) {
  gen.fill(out);
  const double norm = std::sqrt(squared_norm(out));
  // radius * U^(1/d) gives the uniform law; mixing in U itself puts mass
  // near the center too, where high dimensions would otherwise never look.
  const double u = gen.uniform();
  const double r = radius * (gen.uniform() < 0.5 ? u : std::pow(u, 1.0 / static_cast<double>(out.size())));
  for (double& v : out) v *= (norm > 0 ? r / norm : 0.0);
}

}  // namespace detail

/// Sampling-based check of the Lipschitz, one-sided (VV), gamma and linear
/// growth hypotheses over random pairs in the ball of `radius`, plus a Monte
/// Carlo estimate of Z_V = mu_0(e^V). Failures are reported, never thrown.
inline HypothesisReport check_hypotheses(const PotentialModel& pot, const SpectrumModel& spec, std::size_t n_samples,
                                         double radius, std::uint64_t seed = 1) {
  require(n_samples >= 1, "check_hypotheses: n_samples must be >= 1");
  require(radius > 0, "check_hypotheses: radius must be positive");
  const std::size_t d = spec.dim();
  const double lambda1 = spec.lambda1();
  constexpr double slack = 1e-9;

  HypothesisCheck lip{"lipschitz"}, vv{"one_sided"}, h2{"gamma_bound"}, h3{"linear_growth"};
  lip.worst_margin = vv.worst_margin = h2.worst_margin = h3.worst_margin = std::numeric_limits<double>::infinity();
  auto record = [&](HypothesisCheck& c, double bound, double observed) {
    const double margin = bound - observed;
    c.worst_margin = std::min(c.worst_margin, margin);
    if (margin < -slack * std::max(1.0, std::abs(bound))) {
      c.passed = false;
      ++c.violations;
    }
  };

  NormalSource gen(seed);
  std::vector<double> x(d), y(d), gx(d), gy(d);
  for (std::size_t s = 0; s < n_samples; ++s) {
    detail::sample_in_ball(gen, radius, x);
    detail::sample_in_ball(gen, radius, y);
    pot.grad_v(x, gx);
    pot.grad_v(y, gy);
    double diff2 = 0.0, gdiff2 = 0.0, inner = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double dx = x[i] - y[i], dg = gx[i] - gy[i];
      diff2 += dx * dx;
      gdiff2 += dg * dg;
      inner += dg * dx;
    }
    record(lip, pot.lipschitz_grad * std::sqrt(diff2), std::sqrt(gdiff2));
    record(vv, (pot.one_sided_k + lambda1) * diff2, inner);
    const double vx = std::abs(pot.v(x)), nx2 = squared_norm(x);
    for (double eps : {0.1, 1.0, 10.0}) record(h2, 0.5 * (pot.gamma(1.0 / eps) + eps * nx2), vx);
    record(h3, pot.growth_c + pot.growth_theta * std::sqrt(nx2), std::sqrt(squared_norm(gx)));
  }
  if (!(pot.growth_theta < lambda1)) {
    h3.passed = false;
    ++h3.violations;
    h3.worst_margin = std::min(h3.worst_margin, lambda1 - pot.growth_theta);
  }

  HypothesisReport report;
  report.checks = {lip, vv, h2, h3};

  if (pot.is_zero()) {
    report.z_v = {1.0, 0.0, n_samples};
  } else {
    NormalSource zgen(derive_seed(seed, 0x5a));
    RunningStats zs;
    const auto lam = spec.retained();
    for (std::size_t s = 0; s < n_samples; ++s) {
      for (std::size_t i = 0; i < d; ++i) x[i] = zgen() / std::sqrt(lam[i]);
      zs.add(std::exp(pot.v(x)));
    }
    report.z_v = {zs.mean(), n_samples > 1 ? zs.stderr_mean() : 0.0, n_samples};
  }
  return report;
}

// JSON ----------------------------------------------------------------------------

/// {"kind": "zero"} or {"kind": "bounded_linear", "a": [...], "cap": ...}.
/// A missing "a" means a_i = 1 on every retained mode.
inline PotentialModel potential_from_json(const nlohmann::json& j, std::size_t dim) {
  const std::string kind = j.value("kind", std::string("zero"));
  if (kind == "zero") return builtin_zero();
  if (kind == "bounded_linear") {
    std::vector<double> a = j.contains("a") ? j.at("a").get<std::vector<double>>() : std::vector<double>(dim, 1.0);
    require(a.size() <= dim, "bounded_linear: coefficient vector longer than the truncation");
    a.resize(dim, 0.0);
    return builtin_bounded_linear(std::move(a), j.value("cap", 1.0));
  }
  throw PreconditionError("potential: unknown kind '" + kind + "'");
}

inline nlohmann::json potential_to_json(const PotentialModel& pot) {
  switch (pot.kind) {
    case PotentialKind::Zero:
      return {{"kind", "zero"}};
    case PotentialKind::BoundedLinear:
      return {{"kind", "bounded_linear"}, {"a", pot.coefficients}, {"cap", pot.cap}};
    case PotentialKind::Custom:
      return {{"kind", "custom"}};
  }
  return {};
}

}  // namespace spdelab
