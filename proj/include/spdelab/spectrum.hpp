#pragma once

// The operator A, represented only through its eigenvalue sequence, and the
// spectral series every bound in the library is assembled from.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spdelab/core.hpp"

namespace spdelab {

enum class SpectrumKind { PowerLaw, ExponentialLaw, Explicit };

/// Value of a spectral series together with an absolute error bound.
/// `truncated` marks sums whose tail beyond the known eigenvalues could not
/// be bounded (explicit lists with unknown continuation).
struct SeriesValue {
  double value = 0.0;
  double error_bound = 0.0;
  bool truncated = false;

  operator double() const { return value; }
};

class SpectrumModel {
 public:
  static constexpr std::size_t kDefaultDim = 256;
  static constexpr double kDefaultTailTol = 1e-10;

  /// lambda_i = c0 * i^p, p > 1.
  static SpectrumModel power_law(double c0, double p, std::size_t dim = kDefaultDim,
                                 double tail_tol = kDefaultTailTol) {
    require(c0 > 0, "power_law: coefficient must be positive");
    if (!(p > 1)) throw DivergenceError("power_law: sum of lambda_i^-delta diverges for every delta < 1 when p <= 1");
    return SpectrumModel(SpectrumKind::PowerLaw, c0, p, {}, true, dim, tail_tol);
  }

  /// lambda_i = c * exp(i^p), p > 0.
  static SpectrumModel exponential_law(double c, double p, std::size_t dim = kDefaultDim,
                                       double tail_tol = kDefaultTailTol) {
    require(c > 0, "exponential_law: coefficient must be positive");
    require(p > 0, "exponential_law: exponent must be positive");
    return SpectrumModel(SpectrumKind::ExponentialLaw, c, p, {}, true, dim, tail_tol);
  }

  /// A finite ascending list. When `complete` the list is the whole spectrum
  /// (a finite-dimensional operator); otherwise the continuation is unknown
  /// and series over it are flagged as truncated.
  static SpectrumModel explicit_values(std::vector<double> values, bool complete = true,
                                       double tail_tol = kDefaultTailTol) {
    require(!values.empty(), "explicit spectrum: empty list");
    for (std::size_t i = 0; i < values.size(); ++i) {
      require(values[i] > 0 && std::isfinite(values[i]), "explicit spectrum: eigenvalues must be positive");
      if (i > 0) require(values[i] >= values[i - 1], "explicit spectrum: list must be sorted ascending");
    }
    const std::size_t d = values.size();
    return SpectrumModel(SpectrumKind::Explicit, 0.0, 0.0, std::move(values), complete, d, tail_tol);
  }

  SpectrumKind kind() const { return kind_; }
  double coefficient() const { return coef_; }
  double exponent() const { return exponent_; }
  std::size_t dim() const { return dim_; }
  double tail_tol() const { return tail_tol_; }
  /// True when series tails are known (analytic law, or complete explicit list).
  bool tail_known() const { return complete_; }
  const std::vector<double>& explicit_list() const { return list_; }

  /// Eigenvalues of the retained modes 1..dim.
  std::span<const double> retained() const { return retained_; }

  /// lambda_i, 1-based.
  double eigenvalue(std::size_t i) const {
    if (i == 0) throw RangeError("eigenvalue: index is 1-based");
    switch (kind_) {
      case SpectrumKind::PowerLaw:
        return coef_ * std::pow(static_cast<double>(i), exponent_);
      case SpectrumKind::ExponentialLaw:
        return coef_ * std::exp(std::pow(static_cast<double>(i), exponent_));
      case SpectrumKind::Explicit:
        if (i > list_.size())
          throw RangeError("eigenvalue: index " + std::to_string(i) + " beyond explicit list of length " +
                           std::to_string(list_.size()));
        return list_[i - 1];
    }
    return 0.0;
  }

  /// Number of eigenvalues that exist (infinite laws report SIZE_MAX).
  std::size_t available() const {
    return kind_ == SpectrumKind::Explicit ? list_.size() : static_cast<std::size_t>(-1);
  }

  double lambda1() const { return eigenvalue(1); }

  /// Same law with a different number of retained modes.
  SpectrumModel with_dim(std::size_t d) const {
    if (kind_ == SpectrumKind::Explicit) require(d <= list_.size(), "with_dim: explicit list too short");
    return SpectrumModel(kind_, coef_, exponent_, list_, complete_, d, tail_tol_);
  }

  /// The finite-dimensional operator made of the retained modes only; series
  /// over it are exact finite sums. Used to compare against simulations,
  /// which only ever see `dim()` modes.
  SpectrumModel truncated() const {
    return explicit_values(std::vector<double>(retained_.begin(), retained_.end()), true, tail_tol_);
  }

  /// Sum over i >= first of 1/lambda_i (first is 1-based), with an absolute
  /// error bound. Throws DivergenceError when the series diverges.
  SeriesValue reciprocal_tail(std::size_t first) const;

 private:
  SpectrumModel(SpectrumKind kind, double coef, double exponent, std::vector<double> list, bool complete,
                std::size_t dim, double tail_tol)
      : kind_(kind), coef_(coef), exponent_(exponent), list_(std::move(list)), complete_(complete), dim_(dim),
        tail_tol_(tail_tol) {
    require(dim_ >= 1, "spectrum: truncation dimension must be positive");
    require(tail_tol_ > 0, "spectrum: tail tolerance must be positive");
    retained_.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) retained_[i] = eigenvalue(i + 1);
  }

  SpectrumKind kind_;
  double coef_;
  double exponent_;
  std::vector<double> list_;
  bool complete_;
  std::size_t dim_;
  double tail_tol_;
  std::vector<double> retained_;
};

namespace detail {

// Upper incomplete gamma bound: Gamma(a, x) <= x^(a-1) e^-x * x / (x - (a-1))
// for a > 1 and x > a - 1, and Gamma(a, x) <= x^(a-1) e^-x for a <= 1.
inline double upper_gamma_bound(double a, double x) {
  const double base = std::exp((a - 1.0) * std::log(x) - x);
  if (a <= 1.0) return base;
  if (x <= a - 1.0) return std::numeric_limits<double>::infinity();
  return base * x / (x - (a - 1.0));
}

// sum_{i > m} i^-p by Euler-Maclaurin at s = m:
// int_m^inf s^-p ds - f(m)/2 - f'(m)/12 + f'''(m)/720 - f^(5)(m)/30240.
inline SeriesValue zeta_tail(double p, double m) {
  const double f = std::pow(m, -p);
  const double integral = m * f / (p - 1.0);
  const double d1 = -p * f / m;
  const double d3 = -p * (p + 1) * (p + 2) * f / (m * m * m);
  const double d5 = -p * (p + 1) * (p + 2) * (p + 3) * (p + 4) * f / std::pow(m, 5);
  const double value = integral - f / 2.0 - d1 / 12.0 + d3 / 720.0 - d5 / 30240.0;
  const double d7 = p * (p + 1) * (p + 2) * (p + 3) * (p + 4) * (p + 5) * (p + 6) * f / std::pow(m, 7);
  return {value, std::abs(d7) / 1209600.0 * 4.0 + 1e-16 * std::abs(value), false};
}

inline constexpr std::size_t kMaxDirectTerms = 20'000'000;

}  // namespace detail

inline SeriesValue SpectrumModel::reciprocal_tail(std::size_t first) const {
  require(first >= 1, "reciprocal_tail: index is 1-based");
  switch (kind_) {
    case SpectrumKind::PowerLaw: {
      // Direct sum up to an index where Euler-Maclaurin is accurate.
      const std::size_t m = std::max<std::size_t>(first - 1, 64);
      double direct = 0.0;
      for (std::size_t i = first; i <= m; ++i) direct += 1.0 / eigenvalue(i);
      const auto tail = detail::zeta_tail(exponent_, static_cast<double>(m));
      return {direct + tail.value / coef_, tail.error_bound / coef_, false};
    }
    case SpectrumKind::ExponentialLaw: {
      double sum = 0.0;
      std::size_t i = first;
      const double a = 1.0 / exponent_;
      for (;; ++i) {
        sum += 1.0 / eigenvalue(i);
        // sum_{j > i} e^{-j^p} <= int_i^inf e^{-s^p} ds = Gamma(1/p, i^p) / p
        const double s = std::pow(static_cast<double>(i), exponent_);
        if (s > a + 2.0) {
          const double bound = detail::upper_gamma_bound(a, s) / exponent_ / coef_;
          if (bound < 1e-3 * tail_tol_) return {sum, bound, false};
        }
      }
    }
    case SpectrumKind::Explicit: {
      double sum = 0.0;
      for (std::size_t i = first; i <= list_.size(); ++i) sum += 1.0 / list_[i - 1];
      return {sum, 0.0, !complete_};
    }
  }
  return {};
}

/// lambda_i for 1-based i.
inline double eigenvalue(const SpectrumModel& model, std::size_t i) { return model.eigenvalue(i); }

/// Sums term(lambda_i) over all modes, where term(l) = weight / l - r(l) with
/// 0 <= r(l) <= weight * exp(-decay * l) / l. Terms are summed directly until
/// decay * lambda_i exceeds 40 (and at least through the retained modes); the
/// remainder is weight * sum 1/lambda_i up to a relative e^-40.
template <class Term>
SeriesValue reciprocal_like_series(const SpectrumModel& model, double weight, double decay, Term&& term) {
  const std::size_t avail = model.available();
  double sum = 0.0;
  std::size_t i = 1;
  for (;; ++i) {
    if (i > avail) return {sum, 0.0, !model.tail_known()};
    const double lam = model.eigenvalue(i);
    if (i > model.dim() && decay * lam > 40.0) break;
    if (i > detail::kMaxDirectTerms) {
      const auto tail = model.reciprocal_tail(i);
      return {sum, weight * (tail.value + tail.error_bound), true};
    }
    sum += term(lam);
  }
  const auto tail = model.reciprocal_tail(i);
  const double remainder_bound = weight * tail.value * std::exp(-40.0);
  return {sum + weight * tail.value, weight * tail.error_bound + remainder_bound, tail.truncated};
}

/// Sums term(lambda_i) where 0 <= term(l) <= scale * exp(-decay * l), stopping
/// once the geometric tail bound drops below the model tolerance.
template <class Term>
SeriesValue exponential_like_series(const SpectrumModel& model, double scale, double decay, Term&& term) {
  require(decay > 0, "exponential_like_series: decay must be positive");
  const std::size_t avail = model.available();
  double sum = 0.0;
  for (std::size_t i = 1;; ++i) {
    if (i > avail) return {sum, 0.0, !model.tail_known()};
    const double lam = model.eigenvalue(i);
    if (i > model.dim() && i + 1 <= avail) {
      const double next = model.eigenvalue(i + 1);
      const double gap = next - lam;
      if (gap > 0) {
        // eigenvalue increments are nondecreasing for both analytic laws
        // (convexity), so the tail is dominated by a geometric series.
        const double bound = scale * std::exp(-decay * lam) / (-std::expm1(-decay * gap));
        if (bound < model.tail_tol()) return {sum, bound, false};
      }
    }
    if (i > detail::kMaxDirectTerms) return {sum, std::numeric_limits<double>::infinity(), true};
    sum += term(lam);
  }
}

/// h(eps) = sum_i (1 - e^{-2 eps lambda_i}) / lambda_i.
inline SeriesValue series_h(const SpectrumModel& model, double eps) {
  require(eps >= 0, "series_h: eps must be nonnegative");
  if (eps == 0) return {0.0, 0.0, false};
  return reciprocal_like_series(model, 1.0, 2.0 * eps,
                                [eps](double lam) { return -std::expm1(-2.0 * eps * lam) / lam; });
}

/// sum_i 1/lambda_i.
inline SeriesValue trace_inverse(const SpectrumModel& model) {
  if (model.kind() == SpectrumKind::PowerLaw && model.exponent() <= 1.0)
    throw DivergenceError("trace_inverse: sum of 1/lambda_i diverges for p <= 1");
  return model.reciprocal_tail(1);
}

/// Least-squares slope of log h(eps) against log eps.
inline double h_scaling_exponent(const SpectrumModel& model, std::span<const double> eps_grid) {
  std::vector<double> sorted(eps_grid.begin(), eps_grid.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() < 2) throw PreconditionError("h_scaling_exponent: need at least 2 distinct eps values");
  require(sorted.front() > 0, "h_scaling_exponent: eps values must be positive");
  std::vector<double> lx, ly;
  for (double e : eps_grid) {
    lx.push_back(std::log(e));
    ly.push_back(std::log(series_h(model, e).value));
  }
  return least_squares(lx, ly).slope;
}

/// `count` log-spaced points between lo and hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  require(lo > 0 && hi > lo && count >= 2, "log_grid: need 0 < lo < hi and count >= 2");
  std::vector<double> g(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

// JSON ----------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const SpectrumModel& m) {
  switch (m.kind()) {
    case SpectrumKind::PowerLaw:
      j = {{"kind", "power"}, {"c", m.coefficient()}, {"p", m.exponent()}};
      break;
    case SpectrumKind::ExponentialLaw:
      j = {{"kind", "exp"}, {"c", m.coefficient()}, {"p", m.exponent()}};
      break;
    case SpectrumKind::Explicit:
      j = {{"kind", "explicit"}, {"values", m.explicit_list()}};
      if (!m.tail_known()) j["complete"] = false;
      break;
  }
  j["dim"] = m.dim();
  j["tail_tol"] = m.tail_tol();
}

inline SpectrumModel spectrum_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const double tol = j.value("tail_tol", SpectrumModel::kDefaultTailTol);
  if (kind == "power" || kind == "exp") {
    const double c = j.value("c", 1.0);
    const double p = j.at("p").get<double>();
    const auto dim = j.value("dim", SpectrumModel::kDefaultDim);
    return kind == "power" ? SpectrumModel::power_law(c, p, dim, tol) : SpectrumModel::exponential_law(c, p, dim, tol);
  }
  if (kind == "explicit") {
    auto values = j.at("values").get<std::vector<double>>();
    const bool complete = j.value("complete", true);
    auto model = SpectrumModel::explicit_values(std::move(values), complete, tol);
    if (j.contains("dim")) model = model.with_dim(j.at("dim").get<std::size_t>());
    return model;
  }
  throw PreconditionError("spectrum: unknown kind '" + kind + "'");
}

}  // namespace spdelab
