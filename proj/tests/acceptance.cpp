// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion numbers...]   (no arguments runs all ten)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spdelab/spdelab.hpp"

using namespace spdelab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EmpiricalMeasure diag_gaussian(std::span<const double> vars, std::size_t n, std::uint64_t seed) {
  NormalSource gen(seed);
  PointCloud pc(n, vars.size());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < vars.size(); ++i) pc[k][i] = std::sqrt(vars[i]) * gen();
  return EmpiricalMeasure::uniform(std::move(pc));
}

EmpiricalMeasure random_measure(std::size_t n, std::size_t d, std::uint64_t seed, bool random_weights) {
  NormalSource gen(seed);
  PointCloud pc(n, d);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < d; ++i) pc[k][i] = gen();
  auto m = EmpiricalMeasure::uniform(std::move(pc));
  if (random_weights) {
    double total = 0;
    for (double& w : m.weights) total += (w = 0.1 + gen.uniform());
    for (double& w : m.weights) w /= total;
  }
  return m;
}

// 1 ---------------------------------------------------------------------------------
Outcome transport_oracle() {
  const std::vector<double> va{1.0, 0.25}, vb{4.0, 0.25};
  const std::vector<double> zero(2, 0.0);
  const double oracle = gaussian_w2_oracle(va, vb, zero, zero);
  const CostSpec w2{2.0, std::nullopt};
  RunningStats rel;
  for (std::uint64_t r = 0; r < 10; ++r) {
    const auto a = diag_gaussian(va, 2048, derive_seed(101, r, 0));
    const auto b = diag_gaussian(vb, 2048, derive_seed(101, r, 1));
    rel.add(std::abs(exact_wp(a, b, w2).value - oracle) / oracle);
  }
  return {std::abs(oracle - 1.0) < 1e-12 && rel.mean() <= 0.07,
          fmt("oracle %.6f, mean relative error %.4f (limit 0.07)", oracle, rel.mean())};
}

// 2 ---------------------------------------------------------------------------------
Outcome sinkhorn_vs_exact() {
  const CostSpec w2{2.0, std::nullopt};
  double worst = 0.0, violation = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    auto a = random_measure(64, 3, derive_seed(202, k, 0), false);
    auto b = random_measure(64, 3, derive_seed(202, k, 1), false);
    for (std::size_t j = 0; j < b.size(); ++j) b.points[j][0] += 1.0;
    const double exact = exact_wp(a, b, w2).value;
    // the value settles long before the L1 marginal error reaches 1e-9 at this reg
    const auto s = sinkhorn_wp(a, b, w2, 1e-3 * median_cost(a, b, w2), 1000);
    violation = std::max(violation, s.marginal_violation);
    worst = std::max(worst, std::abs(s.value - exact) / exact);
  }
  return {worst <= 0.01,
          fmt("worst relative gap %.5f over 50 pairs (limit 0.01), worst marginal L1 error %.1e", worst, violation)};
}

// 3 ---------------------------------------------------------------------------------
Outcome simulator_law() {
  const auto spec = SpectrumModel::power_law(1.0, 2.0, 20).truncated();
  const auto lambdas = spec.retained();
  const std::size_t reps = 10000;
  bool ok = true;
  std::string detail;
  for (double eps : {0.1, 0.5}) {
    RunningStats inc;
    std::vector<RunningStats> cov(lambdas.size());
    for (std::size_t r = 0; r < reps; ++r) {
      SimConfig c{spec};
      c.t_max = eps;
      c.seed = derive_seed(303, static_cast<std::uint64_t>(eps * 1000), r);
      const auto path = simulate(c, {eps});
      inc.add(squared_distance(path.state(0), path.state(1)));
      for (std::size_t i = 0; i < lambdas.size(); ++i) cov[i].add(path.state(0)[i] * path.state(1)[i]);
    }
    const double alpha = alpha_closed(spec, eps).value;
    const double rel = std::abs(inc.mean() - alpha) / alpha;
    std::size_t bad = 0;
    double worst_z = 0.0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const double z = std::abs(cov[i].mean() - std::exp(-lambdas[i] * eps) / lambdas[i]) / cov[i].stderr_mean();
      worst_z = std::max(worst_z, z);
      if (z > 3.0) ++bad;
    }
    ok = ok && rel <= 0.05 && bad == 0;
    detail += fmt("eps=%.1f: alpha rel err %.4f, worst mode z %.2f; ", eps, rel, worst_z);
  }
  return {ok, detail};
}

// 4 ---------------------------------------------------------------------------------
Outcome series_scaling() {
  const auto grid = log_grid(1e-4, 1e-1, 31);
  bool ok = true;
  std::string detail;
  for (double p : {2.0, 3.0}) {
    const double s = h_scaling_exponent(SpectrumModel::power_law(1.0, p, 64), grid);
    ok = ok && std::abs(s - (1.0 - 1.0 / p)) <= 0.05;
    detail += fmt("p=%g slope %.4f (target %.4f); ", p, s, 1.0 - 1.0 / p);
  }
  return {ok, detail};
}

// 5 ---------------------------------------------------------------------------------
Outcome xi_oracle() {
  const double t = 100.0;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 10000; ++k) {
    const double eps = k / 10001.0;
    best = std::min(best, 16.0 / (t * -std::expm1(-2.0 * eps)) + 4.0 * -std::expm1(-eps));
  }
  BoundConstants c;
  c.lambda_0 = 1.0;
  const double v = xi_t(SpectrumModel::explicit_values({1.0}), c, t);
  return {std::abs(v - best) <= 1e-3, fmt("xi_100 = %.6f, grid oracle %.6f", v, best)};
}

// 6 ---------------------------------------------------------------------------------
Outcome eta_exponent() {
  auto curve = eta_curve(SpectrumModel::power_law(1.0, 2.0, 64), [](double s) { return s; }, 1.0, exp_grid(4, 12));
  const double slope = fit_exponent(curve).slope;
  return {slope >= -0.6 && slope <= -0.4, fmt("fitted exponent %.4f (window [-0.6, -0.4])", slope)};
}

// 7, 8 ------------------------------------------------------------------------------
std::optional<ExperimentResult> experiment;

const ExperimentResult& default_experiment() {
  if (!experiment) {
    ExperimentConfig c;
    c.spectrum = SpectrumModel::power_law(1.0, 2.0, 64);
    c.consts = BoundConstants::for_spectrum(c.spectrum);
    c.consts.k_lower = 2.0;
    c.cost = CostSpec{1.0, 1.0};
    c.threads = default_threads();
    experiment = run_experiment(c);
  }
  return *experiment;
}

Outcome rate_experiment() {
  const auto& r = default_experiment();
  const auto& p = r.points;
  bool decreasing = true;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    const double se = std::hypot(p[k].distance.std_error, p[k + 1].distance.std_error);
    if (!(p[k].distance.value - p[k + 1].distance.value > 2.0 * se)) decreasing = false;
  }
  const double slope = r.simulated.exponent_fit->slope;
  // also the ordering invariant of the rates module: [predicted - 0.35, 0)
  const double predicted = predicted_exponent(RateRegime::LowerCappedW1, 2.0).log_t;
  const bool in_rates_window = slope >= predicted - 0.35 && slope < 0.0;
  std::ostringstream values;
  for (const auto& q : p) values << fmt("%.4f+-%.4f ", q.distance.value, q.distance.std_error);
  return {decreasing && slope >= -1.0 && slope <= -0.15 && in_rates_window && r.elapsed_seconds <= 900.0,
          fmt("exponent %.4f (window [-1, -0.15], and [%.2f, 0)), decreasing beyond 2se: %s, %.0f s; curve ", slope,
              predicted - 0.35, decreasing ? "yes" : "no", r.elapsed_seconds) +
              values.str()};
}

Outcome lower_bound_validity() {
  const auto& r = default_experiment();
  bool ok = r.lower.has_value();
  std::ostringstream os;
  for (std::size_t k = 0; ok && k < r.points.size(); ++k) {
    const double lim = r.points[k].distance.value + 2.0 * r.points[k].distance.std_error;
    ok = ok && r.lower->values[k] <= lim;
    os << fmt("%.4f<=%.4f ", r.lower->values[k], lim);
  }
  return {ok, os.str()};
}

// 9 ---------------------------------------------------------------------------------
Outcome moment_bound() {
  const std::vector<double> norms{0.0, 1.0, 5.0, 10.0};
  const auto spec = SpectrumModel::power_law(1.0, 2.0, 16);
  SimConfig zero{spec};
  zero.seed = 909;
  const auto a = moment_bound_check(zero, norms, 5.0, 200, 64, default_threads());
  SimConfig bl{spec, builtin_bounded_linear(std::vector<double>(16, 1.0), 1.0)};
  bl.dt = std::min(0.01, bl.stability_limit());
  bl.seed = 910;
  const auto b = moment_bound_check(bl, norms, 5.0, 200, 64, default_threads());
  double min_a = 1e300, min_b = 1e300;
  for (const auto& e : a.entries) min_a = std::min(min_a, e.margin);
  for (const auto& e : b.entries) min_b = std::min(min_b, e.margin);
  return {a.closed_form && a.certified() && b.certified(),
          fmt("V=0: k=%.4f min margin %.3g; bounded_linear: k=%.4f min margin %.3g", a.k, min_a, b.k, min_b)};
}

// 10 --------------------------------------------------------------------------------
Outcome metric_properties() {
  std::size_t asym = 0, tri = 0, nonzero_self = 0, checked = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const auto x = random_measure(6 + k % 5, 2, derive_seed(1010, k, 0), k % 2 == 0);
    const auto y = random_measure(7 + k % 3, 2, derive_seed(1010, k, 1), k % 3 == 0);
    const auto z = random_measure(5 + k % 4, 2, derive_seed(1010, k, 2), false);
    for (double p : {1.0, 2.0})
      for (std::optional<double> cap : {std::optional<double>{}, std::optional<double>{1.0}}) {
        const CostSpec c{p, cap};
        const double xy = exact_wp(x, y, c).value, yx = exact_wp(y, x, c).value;
        const double yz = exact_wp(y, z, c).value, xz = exact_wp(x, z, c).value;
        if (xy != yx) ++asym;
        if (xz > xy + yz + 1e-9) ++tri;
        if (exact_wp(x, x, c).value != 0.0) ++nonzero_self;
        ++checked;
      }
  }
  return {asym == 0 && tri == 0 && nonzero_self == 0,
          fmt("%zu cases: asymmetric %zu, triangle violations %zu, nonzero self-distance %zu", checked, asym, tri,
              nonzero_self)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double limit_seconds;  // 0: no wall-clock limit
  };
  const std::vector<Criterion> criteria{
      {"transport oracle", transport_oracle, 120},
      {"sinkhorn vs exact", sinkhorn_vs_exact, 60},
      {"simulator law (V=0)", simulator_law, 0},
      {"series scaling", series_scaling, 0},
      {"xi_t oracle", xi_oracle, 0},
      {"eta_t exponent", eta_exponent, 0},
      {"end-to-end rate experiment", rate_experiment, 900},
      {"lower-bound validity", lower_bound_validity, 0},
      {"moment bound", moment_bound, 0},
      {"metric properties", metric_properties, 0},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criteria[i].limit_seconds > 0 && secs > criteria[i].limit_seconds) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s limit]", criteria[i].limit_seconds);
    }
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
