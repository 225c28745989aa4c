#pragma once

// Wasserstein distances between weighted point clouds: exact solvers
// (assignment for equal-size uniform clouds, network simplex otherwise),
// debiased log-domain Sinkhorn, the diagonal Gaussian W_2 closed form and the
// plug-in estimator of the distance to the invariant measure.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/detail/assignment.hpp"
#include "spdelab/detail/network_simplex.hpp"
#include "spdelab/empirical.hpp"
#include "spdelab/gaussian.hpp"

namespace spdelab {

/// Ground cost rho(x, y)^power with rho = |x - y| or |x - y| ^ cap.
struct CostSpec {
  double power = 2.0;
  std::optional<double> cap;

  void validate() const {
    require(power >= 1.0, "CostSpec: power must be >= 1");
    require(!cap || *cap > 0, "CostSpec: cap must be positive");
  }

  double rho(std::span<const double> x, std::span<const double> y) const {
    const double d = std::sqrt(squared_distance(x, y));
    return cap ? std::min(d, *cap) : d;
  }

  double operator()(std::span<const double> x, std::span<const double> y) const {
    if (power == 2.0 && !cap) return squared_distance(x, y);
    const double r = rho(x, y);
    return power == 1.0 ? r : std::pow(r, power);
  }
};

/// Coupling stored sparsely as (row, col, mass) triples.
struct TransportPlan {
  struct Entry {
    std::size_t row, col;
    double mass;
  };
  std::size_t rows = 0, cols = 0;
  std::vector<Entry> entries;
  double cost = 0.0;  // integral of rho^p

  /// max over rows and columns of |marginal - target|.
  double marginal_error(std::span<const double> a, std::span<const double> b) const {
    std::vector<double> ra(rows, 0.0), cb(cols, 0.0);
    for (const auto& e : entries) {
      ra[e.row] += e.mass;
      cb[e.col] += e.mass;
    }
    double err = 0.0;
    for (std::size_t i = 0; i < rows; ++i) err = std::max(err, std::abs(ra[i] - a[i]));
    for (std::size_t j = 0; j < cols; ++j) err = std::max(err, std::abs(cb[j] - b[j]));
    return err;
  }

  bool nonnegative() const {
    return std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.mass >= 0; });
  }
};

struct WpResult {
  double value = 0.0;
  TransportPlan plan;
  std::string solver;
};

/// Largest combined support handled by exact_wp.
inline constexpr std::size_t kExactBudget = 4096;

/// Resolution of the integer supplies fed to the network simplex.
inline constexpr double kSupplyScale = 1e12;

inline std::vector<double> cost_matrix(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& cost) {
  std::vector<double> c(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.points[i];
    double* row = c.data() + i * b.size();
    for (std::size_t j = 0; j < b.size(); ++j) row[j] = cost(x, b.points[j]);
  }
  return c;
}

namespace detail {

inline std::vector<std::int64_t> integerize(std::span<const double> w) {
  const auto total = static_cast<std::int64_t>(kSupplyScale);
  std::vector<std::int64_t> out(w.size());
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < w.size(); ++i) sum += out[i] = std::llround(w[i] * kSupplyScale);
  // rounding residue goes to the heaviest atom
  const auto k = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
  out[k] += total - sum;
  if (out[k] < 0) throw NumericalError("transport: weights cannot be integerized");
  return out;
}

// Orders two measures canonically so that exact_wp(a, b) and exact_wp(b, a)
// run the identical computation.
inline bool canonical_less(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  if (a.weights != b.weights) return a.weights < b.weights;
  return a.points.data() < b.points.data();
}

inline double total_cost(const std::vector<TransportPlan::Entry>& entries, std::span<const double> c,
                         std::size_t cols) {
  double s = 0.0;
  for (const auto& e : entries) s += e.mass * c[e.row * cols + e.col];
  return s;
}

inline WpResult exact_ordered(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& cost) {
  const auto c = cost_matrix(a, b, cost);
  WpResult out;
  out.plan.rows = a.size();
  out.plan.cols = b.size();
  if (a.size() == b.size() && a.uniform_weights() && b.uniform_weights()) {
    const auto col = solve_assignment(c, a.size(), b.size());
    const double m = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out.plan.entries.push_back({i, static_cast<std::size_t>(col[i]), m});
    out.solver = "assignment";
  } else {
    const auto sa = integerize(a.weights), sb = integerize(b.weights);
    TransportSimplex ns(c, sa, sb);
    if (ns.run() != SimplexStatus::Optimal) throw NumericalError("exact_wp: network simplex did not reach optimality");
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j)
        if (const auto f = ns.flow(i, j); f > 0)
          out.plan.entries.push_back({i, j, static_cast<double>(f) / kSupplyScale});
    out.solver = "network_simplex";
  }
  out.plan.cost = std::max(0.0, total_cost(out.plan.entries, c, b.size()));
  out.value = std::pow(out.plan.cost, 1.0 / cost.power);
  return out;
}

}  // namespace detail

/// W_p(a, b) = (min over couplings of int rho^p)^{1/p}, exactly.
inline WpResult exact_wp(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& cost) {
  cost.validate();
  a.validate();
  b.validate();
  require(a.dim() == b.dim(), "exact_wp: dimension mismatch");
  if (a.size() + b.size() > kExactBudget)
    throw BudgetError("exact_wp: combined support " + std::to_string(a.size() + b.size()) + " exceeds the exact budget " +
                      std::to_string(kExactBudget) + "; use sinkhorn_wp");
  if (!detail::canonical_less(b, a)) return detail::exact_ordered(a, b, cost);
  auto r = detail::exact_ordered(b, a, cost);
  std::swap(r.plan.rows, r.plan.cols);
  for (auto& e : r.plan.entries) std::swap(e.row, e.col);
  return r;
}

// Entropic ----------------------------------------------------------------------

struct SinkhornResult {
  double value = 0.0;  // debiased, raised to 1/p
  double divergence = 0.0;  // S before the power
  double reg = 0.0;
  std::size_t iterations = 0;
  double marginal_violation = 0.0;  // L1, worst of the three solves
  bool converged = true;
};

namespace detail {

struct EntropicSolve {
  double value = 0.0;
  std::size_t iterations = 0;
  double violation = 0.0;
  bool converged = false;
};

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, v[k]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k] - m);
  return m + std::log(s);
}

// Log-domain Sinkhorn with eps-scaling from the cost range down to reg.
// Returns OT_reg = <a, f> + <b, g> at the final potentials. For a symmetric
// problem (b = a, c symmetric) the averaged update f <- (f + T f) / 2 is used,
// which converges in a few hundred sweeps where the alternating one stalls.
inline EntropicSolve entropic_ot(std::span<const double> c, std::span<const double> a, std::span<const double> b,
                                 double reg, std::size_t max_iter, double tol, bool symmetric = false) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> f(n, 0.0), g(m, 0.0), la(n), lb(m), buf(std::max(n, m));
  for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
  for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(b[j]);
  const double cmax = *std::max_element(c.begin(), c.end());

  auto update_f = [&](double eps) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = lb[j] + (g[j] - c[i * m + j]) / eps;
      f[i] = -eps * log_sum_exp(buf.data(), m);
    }
  };
  auto update_g = [&](double eps) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = la[i] + (f[i] - c[i * m + j]) / eps;
      g[j] = -eps * log_sum_exp(buf.data(), n);
    }
  };
  // L1 violation of the row marginal (columns are exact after update_g)
  auto violation = [&](double eps) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = lb[j] + (g[j] + f[i] - c[i * m + j]) / eps;
      v += std::abs(a[i] * std::exp(log_sum_exp(buf.data(), m)) - a[i]);
    }
    return v;
  };

  EntropicSolve out;
  double eps = std::max(cmax, reg);
  for (;;) {
    const bool last = eps <= reg;
    const std::size_t budget = last ? max_iter : 20;
    std::size_t it = 0;
    for (; it < budget; ++it) {
      if (symmetric) {
        const auto prev = f;
        update_f(eps);
        for (std::size_t i = 0; i < n; ++i) g[i] = f[i] = 0.5 * (f[i] + prev[i]);
      } else {
        update_f(eps);
        update_g(eps);
      }
      ++out.iterations;
      if ((it % 10 == 9 || it + 1 == budget) && violation(eps) < tol) {
        ++it;
        break;
      }
    }
    if (last) {
      out.violation = violation(eps);
      out.converged = out.violation < tol;
      break;
    }
    eps = std::max(reg, eps * 0.5);
  }
  for (std::size_t i = 0; i < n; ++i) out.value += a[i] * f[i];
  for (std::size_t j = 0; j < m; ++j) out.value += b[j] * g[j];
  return out;
}

}  // namespace detail

/// Median of rho^p over all pairs (a_i, b_j); the natural scale for reg.
inline double median_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& cost) {
  auto c = cost_matrix(a, b, cost);
  auto mid = c.begin() + static_cast<std::ptrdiff_t>(c.size() / 2);
  std::nth_element(c.begin(), mid, c.end());
  return *mid;
}

/// Debiased entropic estimate S = OT(a,b) - OT(a,a)/2 - OT(b,b)/2, returned as
/// max(S, 0)^{1/p}. reg <= 0 selects 0.05 * median_cost.
inline SinkhornResult sinkhorn_wp(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& cost, double reg,
                                  std::size_t max_iter = 10000, double tol = 1e-9) {
  cost.validate();
  a.validate();
  b.validate();
  require(a.dim() == b.dim(), "sinkhorn_wp: dimension mismatch");
  if (!(reg > 0)) reg = 0.05 * median_cost(a, b, cost);
  if (!(reg > 0)) reg = 1e-12;  // every pairwise cost vanishes
  SinkhornResult out;
  out.reg = reg;
  const bool same = a.points == b.points && a.weights == b.weights;
  const auto ab = detail::entropic_ot(cost_matrix(a, b, cost), a.weights, b.weights, reg, max_iter, tol, same);
  const auto aa = detail::entropic_ot(cost_matrix(a, a, cost), a.weights, a.weights, reg, max_iter, tol, true);
  const auto bb = detail::entropic_ot(cost_matrix(b, b, cost), b.weights, b.weights, reg, max_iter, tol, true);
  out.divergence = ab.value - 0.5 * aa.value - 0.5 * bb.value;
  out.value = std::pow(std::max(out.divergence, 0.0), 1.0 / cost.power);
  out.iterations = ab.iterations + aa.iterations + bb.iterations;
  out.marginal_violation = std::max({ab.violation, aa.violation, bb.violation});
  out.converged = ab.converged && aa.converged && bb.converged;
  return out;
}

/// W_2 between N(mean_a, diag vars_a) and N(mean_b, diag vars_b).
inline double gaussian_w2_oracle(std::span<const double> vars_a, std::span<const double> vars_b,
                                 std::span<const double> mean_a, std::span<const double> mean_b) {
  require(vars_a.size() == vars_b.size() && mean_a.size() == mean_b.size() && mean_a.size() == vars_a.size(),
          "gaussian_w2_oracle: length mismatch");
  double s = squared_distance(mean_a, mean_b);
  for (std::size_t i = 0; i < vars_a.size(); ++i) {
    require(vars_a[i] > 0 && vars_b[i] > 0, "gaussian_w2_oracle: variances must be positive");
    const double d = std::sqrt(vars_a[i]) - std::sqrt(vars_b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// exact_wp when the supports fit the budget, sinkhorn_wp otherwise.
struct DistanceValue {
  double value = 0.0;
  std::string solver;
  double reg = 0.0;
};

inline DistanceValue distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& cost) {
  if (a.size() + b.size() <= kExactBudget) {
    auto r = exact_wp(a, b, cost);
    return {r.value, r.solver, 0.0};
  }
  const auto r = sinkhorn_wp(a, b, cost, 0.0);
  return {r.value, "sinkhorn", r.reg};
}

// Plug-in estimator ---------------------------------------------------------------

struct DistanceEstimate {
  Estimate value;     // mean over replicas of W(meas, fresh mu-cloud)
  Estimate baseline;  // same statistic between two independent mu-clouds
  std::string solver;
  double reg = 0.0;
  std::size_t replicas = 0;

  nlohmann::json to_json() const {
    return {{"value", value.value},       {"stderr", value.std_error}, {"solver", solver},
            {"reg", reg},                 {"baseline", baseline.value}, {"baseline_stderr", baseline.std_error},
            {"replicas", replicas}};
  }
};

inline PointCloud draw_mu(const InvariantMeasure& m, std::size_t n, std::uint64_t seed) {
  if (m.pot.is_zero()) return sample_mu0(m.base, n, seed);
  const SimConfig sc{m.spectrum(), m.pot};
  return sample_mu(m, n, seed, stationary_burn_in(sc), 1.0 / m.spectrum().lambda1()).points;
}

/// Averages distance(meas, n_ref-sample of mu) over replicas, with the
/// same-law baseline distance(|meas|-sample, n_ref-sample).
inline DistanceEstimate estimate_distance_to_mu(const EmpiricalMeasure& meas, const InvariantMeasure& m,
                                                const CostSpec& cost, std::size_t n_ref, std::uint64_t seed,
                                                std::size_t replicas, unsigned threads = 1) {
  require(replicas >= 1 && n_ref >= 1, "estimate_distance_to_mu: need replicas >= 1 and n_ref >= 1");
  require(meas.dim() == m.dim(), "estimate_distance_to_mu: dimension mismatch");
  std::vector<DistanceValue> vals(replicas), base(replicas);
  parallel_for(replicas, threads, [&](std::size_t r) {
    const auto ref = EmpiricalMeasure::uniform(draw_mu(m, n_ref, derive_seed(seed, r, 0)));
    vals[r] = distance(meas, ref, cost);
    const auto twin = EmpiricalMeasure::uniform(draw_mu(m, meas.size(), derive_seed(seed, r, 1)));
    const auto ref2 = EmpiricalMeasure::uniform(draw_mu(m, n_ref, derive_seed(seed, r, 2)));
    base[r] = distance(twin, ref2, cost);
  });
  std::vector<double> v(replicas), b(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    v[r] = vals[r].value;
    b[r] = base[r].value;
  }
  DistanceEstimate out;
  out.value = summarize(v);
  out.baseline = summarize(b);
  if (replicas == 1) out.value.std_error = out.baseline.std_error = 0.0;
  out.solver = vals.front().solver;
  out.reg = vals.front().reg;
  out.replicas = replicas;
  return out;
}

}  // namespace spdelab
