// spdelab command line: simulate, smallball, distance, rates, lowerbound,
// experiment, verify. Exit codes: 0 ok, 1 invariant or numerical failure,
// 2 usage / configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "spdelab/spdelab.hpp"

using namespace spdelab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kFailure = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  unsigned threads = 0;
};

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

ExperimentConfig load_config(const Common& c, json* raw = nullptr) {
  const auto j = load_json(c.config);
  if (raw) *raw = j;
  auto cfg = ExperimentConfig::from_json(j);
  if (c.seed_given) cfg.seed = c.seed;
  if (c.threads > 0) cfg.threads = c.threads;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

// Writes to <out>/<name>, or to stdout when no output directory is set.
void emit(const std::string& out, const std::string& name, const std::function<void(std::ostream&)>& writer) {
  if (out.empty()) {
    writer(std::cout);
    return;
  }
  std::ostringstream os;
  writer(os);
  write_text(fs::path(out) / name, os.str());
  std::cerr << "wrote " << (fs::path(out) / name).string() << '\n';
}

EmpiricalMeasure load_measure(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open " + path);
  return read_csv(is);
}

InvariantMeasure invariant_of(const ExperimentConfig& cfg) {
  return make_invariant(cfg.spectrum, cfg.make_potential(), 20000, derive_seed(cfg.seed, 0x2f));
}

PsiTable psi_for(const ExperimentConfig& cfg, const std::string& psi_file) {
  if (!psi_file.empty()) {
    std::ifstream is(psi_file);
    if (!is) throw UsageError("cannot open " + psi_file);
    return read_psi_csv(is);
  }
  return build_psi_table(invariant_of(cfg), cfg.psi_samples, cfg.psi_radii, derive_seed(cfg.seed, 0x7e));
}

// simulate ----------------------------------------------------------------------------

int cmd_simulate(const Common& c) {
  json raw;
  const auto cfg = load_config(c, &raw);
  SimConfig sc{cfg.spectrum, cfg.make_potential()};
  sc.t_max = raw.value("t_max", 10.0);
  sc.dt = cfg.dt;
  if (!sc.pot.is_zero()) sc.dt = std::min(sc.dt, sc.stability_limit());
  sc.seed = cfg.seed;
  if (raw.contains("initial")) {
    auto x = raw.at("initial").get<std::vector<double>>();
    x.resize(cfg.spectrum.dim(), 0.0);
    sc.initial = PointStart{std::move(x)};
  }
  const std::size_t n = raw.value("n_points", std::size_t{256});
  const auto path = simulate(sc, occupation_times(sc.t_max, n));
  emit(c.out, "path.csv", [&](std::ostream& os) { write_path_csv(os, path); });
  return kOk;
}

// smallball ---------------------------------------------------------------------------

int cmd_smallball(const Common& c, const std::string& psi_out_name) {
  const auto cfg = load_config(c);
  const auto psi = psi_for(cfg, "");
  emit(c.out, psi_out_name, [&](std::ostream& os) { write_psi_csv(os, psi); });
  return kOk;
}

// distance ----------------------------------------------------------------------------

struct DistanceArgs {
  std::string a, b;
  double p = 2.0;
  double cap = 0.0;
  std::string solver = "auto";
  double reg = 0.0;
};

int cmd_distance(const DistanceArgs& d) {
  const auto a = load_measure(d.a), b = load_measure(d.b);
  if (a.dim() != b.dim()) throw UsageError("measures have different dimensions");
  CostSpec cost{d.p, d.cap > 0 ? std::optional<double>(d.cap) : std::nullopt};
  cost.validate();
  json j{{"p", d.p}, {"cap", d.cap > 0 ? json(d.cap) : json(nullptr)}, {"n_a", a.size()}, {"n_b", b.size()}};
  if (d.solver == "sinkhorn") {
    const auto r = sinkhorn_wp(a, b, cost, d.reg);
    j.update({{"value", r.value},
              {"solver", "sinkhorn"},
              {"reg", r.reg},
              {"iterations", r.iterations},
              {"marginal_violation", r.marginal_violation},
              {"converged", r.converged}});
  } else if (d.solver == "exact") {
    const auto r = exact_wp(a, b, cost);
    j.update({{"value", r.value}, {"solver", r.solver}});
  } else {
    const auto r = distance(a, b, cost);
    j.update({{"value", r.value}, {"solver", r.solver}, {"reg", r.reg}});
  }
  std::cout << j.dump(2) << '\n';
  return kOk;
}

// rates / lowerbound --------------------------------------------------------------------

int cmd_rates(const Common& c) {
  const auto cfg = load_config(c);
  cfg.validate();
  const auto pot = cfg.make_potential();
  const bool fittable = cfg.t_grid.size() >= 4 && cfg.t_grid.front() > std::numbers::e;
  std::vector<RateCurve> curves;
  if (pot.is_zero()) curves.push_back(xi_curve(cfg.spectrum, cfg.consts, cfg.t_grid));
  if (cfg.t_grid.front() > 1.0) {
    curves.push_back(eta_curve(cfg.spectrum, pot.gamma, cfg.k_eta, cfg.t_grid));
    const auto psi = psi_for(cfg, "");
    curves.push_back(lower_curve(psi, cfg.spectrum, cfg.consts, cfg.t_grid, cfg.lower_n_max, cfg.cost.cap));
    if (!c.out.empty()) emit(c.out, "psi.csv", [&](std::ostream& os) { write_psi_csv(os, psi); });
  }
  json meta = json::array();
  for (auto& curve : curves) {
    if (fittable && curve.label != "lower_bound") fit_exponent(curve);
    emit(c.out, curve.label + ".csv", [&](std::ostream& os) { curve.write_csv(os); });
    meta.push_back(curve.meta());
  }
  if (!c.out.empty()) write_text(fs::path(c.out) / "rates.json", json{{"curves", meta}}.dump(2) + "\n");
  return kOk;
}

int cmd_lowerbound(const Common& c, const std::string& psi_file) {
  const auto cfg = load_config(c);
  cfg.validate();
  const auto psi = psi_for(cfg, psi_file);
  const auto curve = lower_curve(psi, cfg.spectrum, cfg.consts, cfg.t_grid, cfg.lower_n_max, cfg.cost.cap);
  emit(c.out, "lower_bound.csv", [&](std::ostream& os) { curve.write_csv(os); });
  return kOk;
}

// experiment ----------------------------------------------------------------------------

int cmd_experiment(const Common& c) {
  const auto cfg = load_config(c);
  const auto r = run_experiment(cfg);
  if (cfg.out_dir.empty()) {
    write_experiment_csv(std::cout, r);
  } else {
    write_experiment(cfg.out_dir, r);
    std::cerr << "wrote " << cfg.out_dir << '\n';
  }
  std::cerr << "elapsed " << r.elapsed_seconds << " s";
  if (r.simulated.exponent_fit) std::cerr << ", fitted exponent " << r.simulated.exponent_fit->slope;
  std::cerr << '\n';
  return kOk;
}

// verify --------------------------------------------------------------------------------

int cmd_verify(const Common& c) {
  const std::uint64_t seed = c.seed_given ? c.seed : 1;
  int failed = 0;
  auto check = [&](const char* name, const std::function<std::pair<bool, std::string>()>& f) {
    std::pair<bool, std::string> r;
    try {
      r = f();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (r.first ? "[PASS] " : "[FAIL] ") << name << ": " << r.second << '\n';
    if (!r.first) ++failed;
  };
  const auto spec = SpectrumModel::power_law(1.0, 2.0, 8);

  check("ou stationary variance", [&] {
    SimConfig sc{spec};
    sc.t_max = 1.0;
    RunningStats s;
    for (std::uint64_t r = 0; r < 4000; ++r) {
      sc.seed = derive_seed(seed, 1, r);
      s.add(simulate(sc, {1.0}).state(1)[0]);
    }
    const double z = std::abs(s.variance() - 1.0) / (std::sqrt(2.0 / 4000.0));
    return std::pair{z < 4.0, "mode 1 variance " + std::to_string(s.variance()) + " (1 expected)"};
  });
  check("increment matches alpha", [&] {
    const auto trunc = spec.truncated();
    SimConfig sc{trunc};
    sc.t_max = 0.2;
    RunningStats s;
    for (std::uint64_t r = 0; r < 4000; ++r) {
      sc.seed = derive_seed(seed, 2, r);
      const auto p = simulate(sc, {0.2});
      s.add(squared_distance(p.state(0), p.state(1)));
    }
    const double a = alpha_closed(trunc, 0.2).value;
    return std::pair{std::abs(s.mean() - a) <= 4.0 * s.stderr_mean(),
                     "mean " + std::to_string(s.mean()) + ", closed form " + std::to_string(a)};
  });
  check("metric axioms", [&] {
    NormalSource gen(derive_seed(seed, 3));
    std::size_t bad = 0;
    for (int k = 0; k < 20; ++k) {
      PointCloud x(6, 2), y(7, 2), z(5, 2);
      for (auto* pc : {&x, &y, &z})
        for (std::size_t i = 0; i < pc->size(); ++i)
          for (double& v : (*pc)[i]) v = gen();
      const auto a = EmpiricalMeasure::uniform(x), b = EmpiricalMeasure::uniform(y), m = EmpiricalMeasure::uniform(z);
      for (double p : {1.0, 2.0}) {
        const CostSpec cost{p, std::nullopt};
        const double ab = exact_wp(a, b, cost).value;
        if (ab != exact_wp(b, a, cost).value) ++bad;
        if (exact_wp(a, m, cost).value > ab + exact_wp(b, m, cost).value + 1e-9) ++bad;
        if (exact_wp(a, a, cost).value != 0.0) ++bad;
      }
    }
    return std::pair{bad == 0, std::to_string(bad) + " violations in 40 cases"};
  });
  check("sinkhorn close to exact", [&] {
    NormalSource gen(derive_seed(seed, 4));
    PointCloud x(32, 2), y(32, 2);
    for (std::size_t i = 0; i < 32; ++i) {
      for (double& v : x[i]) v = gen();
      for (double& v : y[i]) v = gen() + 0.5;
    }
    const auto a = EmpiricalMeasure::uniform(x), b = EmpiricalMeasure::uniform(y);
    const CostSpec w2{2.0, std::nullopt};
    const double e = exact_wp(a, b, w2).value;
    const double s = sinkhorn_wp(a, b, w2, 1e-3 * median_cost(a, b, w2), 1000).value;
    return std::pair{std::abs(s - e) <= 0.01 * e, "exact " + std::to_string(e) + ", entropic " + std::to_string(s)};
  });
  check("xi_t single mode", [&] {
    double best = 1e300;
    for (int k = 1; k <= 10000; ++k) {
      const double eps = k / 10001.0;
      best = std::min(best, 16.0 / (100.0 * -std::expm1(-2.0 * eps)) + 4.0 * -std::expm1(-eps));
    }
    BoundConstants bc;
    const double v = xi_t(SpectrumModel::explicit_values({1.0}), bc, 100.0);
    return std::pair{std::abs(v - best) <= 1e-3, std::to_string(v) + " vs grid " + std::to_string(best)};
  });
  check("psi table monotone", [&] {
    const auto m = make_invariant(spec, builtin_zero(), 1000, derive_seed(seed, 5));
    const auto psi = build_psi_table(m, 2000, 16, derive_seed(seed, 6));
    psi.validate();
    return std::pair{psi.psi.back() >= 1.0, "16 radii, last value " + std::to_string(psi.psi.back())};
  });
  check("bounded linear hypotheses", [&] {
    const auto pot = builtin_bounded_linear(std::vector<double>(8, 1.0), 1.0);
    const auto rep = check_hypotheses(pot, spec, 500, 5.0, derive_seed(seed, 7));
    return std::pair{rep.all_passed(), rep.all_passed() ? "all hold" : "a hypothesis failed"};
  });
  std::cout << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << '\n';
  return failed == 0 ? kOk : kFailure;
}

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) app->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  app->add_option_function<std::uint64_t>(
      "--seed",
      [&c](const std::uint64_t& s) {
        c.seed = s;
        c.seed_given = true;
      },
      "Master seed (overrides the config)");
  app->add_option("--out", c.out, "Output directory (stdout when omitted)");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spdelab: convergence experiments for empirical measures of SPDEs"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  DistanceArgs dist;
  std::string psi_file, psi_name = "psi.csv";

  auto* sim = app.add_subcommand("simulate", "Simulate one path and write it as CSV");
  add_common(sim, common);
  auto* sb = app.add_subcommand("smallball", "Estimate the small-ball table psi(r) of the invariant measure");
  add_common(sb, common);
  auto* ds = app.add_subcommand("distance", "Transport distance between two measures stored as CSV");
  ds->add_option("a", dist.a, "First measure")->required()->check(CLI::ExistingFile);
  ds->add_option("b", dist.b, "Second measure")->required()->check(CLI::ExistingFile);
  ds->add_option("--p", dist.p, "Cost exponent (>= 1)");
  ds->add_option("--cap", dist.cap, "Cap the ground metric at this value");
  ds->add_option("--solver", dist.solver, "auto, exact or sinkhorn")
      ->check(CLI::IsMember({"auto", "exact", "sinkhorn"}));
  ds->add_option("--reg", dist.reg, "Entropic regularization (default 0.05 * median cost)");
  auto* rt = app.add_subcommand("rates", "Analytic rate curves for a spectrum");
  add_common(rt, common);
  auto* lb = app.add_subcommand("lowerbound", "Lower-bound curve from a psi table");
  add_common(lb, common);
  lb->add_option("--psi", psi_file, "psi table CSV (estimated when omitted)")->check(CLI::ExistingFile);
  auto* ex = app.add_subcommand("experiment", "Full replicated experiment");
  add_common(ex, common);
  auto* vf = app.add_subcommand("verify", "Run the quick invariant suite");
  add_common(vf, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(common);
    if (*sb) return cmd_smallball(common, psi_name);
    if (*ds) return cmd_distance(dist);
    if (*rt) return cmd_rates(common);
    if (*lb) return cmd_lowerbound(common, psi_file);
    if (*ex) return cmd_experiment(common);
    if (*vf) return cmd_verify(common);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
