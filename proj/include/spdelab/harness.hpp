#pragma once

// Experiment orchestration: JSON configs, replicated simulation of the
// distance from mu_t to mu over a time grid, analytic curves alongside, and
// CSV / JSON persistence.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/empirical.hpp"
#include "spdelab/gaussian.hpp"
#include "spdelab/potential.hpp"
#include "spdelab/rates.hpp"
#include "spdelab/simulator.hpp"
#include "spdelab/spectrum.hpp"
#include "spdelab/transport.hpp"

namespace spdelab {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
  SpectrumModel spectrum = SpectrumModel::power_law(1.0, 2.0, 64);
  nlohmann::json potential = {{"kind", "zero"}};
  CostSpec cost{1.0, 1.0};
  std::vector<double> t_grid = exp_grid(2, 7);
  std::size_t replicas = 32;
  std::size_t n_points = 0;  // 0: max(256, 16 ceil(t)) capped at n_points_cap
  std::size_t n_points_cap = 2048;
  std::size_t n_ref = 0;  // 0: same as n_points
  std::uint64_t seed = 20240601;
  double dt = 1e-2;  // V != 0 only; lowered to the stability guard if needed
  // analytic curves
  std::size_t psi_samples = 20000;
  std::size_t psi_radii = 200;
  std::size_t lower_n_max = 64;
  double k_eta = 1.0;
  BoundConstants consts;
  bool analytic = true;
  unsigned threads = 1;
  std::string out_dir;

  PotentialModel make_potential() const { return potential_from_json(potential, spectrum.dim()); }

  std::size_t points_at(double t) const {
    if (n_points > 0) return n_points;
    return std::min(default_occupation_points(t), n_points_cap);
  }
  std::size_t ref_at(double t) const { return n_ref > 0 ? n_ref : points_at(t); }

  void validate() const {
    if (replicas < 2) throw PreconditionError("experiment: replicas must be >= 2 for standard errors");
    require(!t_grid.empty(), "experiment: empty t grid");
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      require(t_grid[k] > 0, "experiment: t must be positive");
      if (k > 0) require(t_grid[k] > t_grid[k - 1], "experiment: t grid must be increasing");
    }
    cost.validate();
    consts.validate();
    require(dt > 0, "experiment: dt must be positive");
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("spectrum")) c.spectrum = spectrum_from_json(j.at("spectrum"));
    if (j.contains("potential")) c.potential = j.at("potential");
    if (j.contains("cost")) {
      const auto& cj = j.at("cost");
      c.cost.power = cj.value("p", 1.0);
      if (cj.contains("cap") && !cj.at("cap").is_null())
        c.cost.cap = cj.at("cap").get<double>();
      else
        c.cost.cap.reset();
    }
    if (j.contains("t_grid")) {
      const auto& tg = j.at("t_grid");
      if (tg.is_object())
        c.t_grid = exp_grid(tg.at("log_lo").get<int>(), tg.at("log_hi").get<int>());
      else
        c.t_grid = tg.get<std::vector<double>>();
    }
    c.replicas = j.value("replicas", c.replicas);
    c.n_points = j.value("n_points", c.n_points);
    c.n_points_cap = j.value("n_points_cap", c.n_points_cap);
    c.n_ref = j.value("n_ref", c.n_ref);
    c.seed = j.value("seed", c.seed);
    c.dt = j.value("dt", c.dt);
    c.psi_samples = j.value("psi_samples", c.psi_samples);
    c.psi_radii = j.value("psi_radii", c.psi_radii);
    c.lower_n_max = j.value("lower_n_max", c.lower_n_max);
    c.k_eta = j.value("k_eta", c.k_eta);
    c.analytic = j.value("analytic", c.analytic);
    c.threads = j.value("threads", c.threads);
    c.out_dir = j.value("out", c.out_dir);
    c.consts = BoundConstants::for_spectrum(c.spectrum);
    if (j.contains("constants")) {
      const auto& k = j.at("constants");
      c.consts.lambda_0 = k.value("lambda_0", c.consts.lambda_0);
      c.consts.k_alpha = k.value("k_alpha", c.consts.k_alpha);
      c.consts.k_lower = k.value("k_lower", c.consts.k_lower);
      c.consts.k_eta = k.value("k_eta", c.consts.k_eta);
    }
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["spectrum"] = spectrum;
    j["potential"] = potential;
    j["cost"] = {{"p", cost.power}, {"cap", cost.cap ? nlohmann::json(*cost.cap) : nlohmann::json(nullptr)}};
    j["t_grid"] = t_grid;
    j["replicas"] = replicas;
    j["n_points"] = n_points;
    j["n_points_cap"] = n_points_cap;
    j["n_ref"] = n_ref;
    j["seed"] = seed;
    j["dt"] = dt;
    j["psi_samples"] = psi_samples;
    j["psi_radii"] = psi_radii;
    j["lower_n_max"] = lower_n_max;
    j["k_eta"] = k_eta;
    j["constants"] = consts.to_json();
    return j;
  }
};

struct TimePoint {
  double t = 0.0;
  std::size_t n_points = 0;
  std::size_t n_ref = 0;
  Estimate distance;
  Estimate baseline;
  std::size_t diverged = 0;
  std::string solver;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TimePoint> points;
  RateCurve simulated, baseline;
  std::optional<RateCurve> xi, eta, lower;
  std::optional<PsiTable> psi;
  double elapsed_seconds = 0.0;

  nlohmann::json fingerprint() const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return {{"seed", config.seed}, {"version", kVersion}, {"elapsed_seconds", elapsed_seconds}, {"timestamp", stamp}};
  }
};

/// Psi table of mu on an even radius grid up to the radius holding all samples.
inline PsiTable build_psi_table(const InvariantMeasure& m, std::size_t n, std::size_t n_radii, std::uint64_t seed) {
  require(n_radii >= 2, "psi table: need at least 2 radii");
  const auto probe = sample_mu0(m.base, std::min<std::size_t>(n, 4096), derive_seed(seed, 0x51));
  double rmax = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) rmax = std::max(rmax, std::sqrt(squared_norm(probe[k])));
  rmax = 2.0 * rmax + 1.0;
  std::vector<double> radii(n_radii);
  for (std::size_t k = 0; k < n_radii; ++k) radii[k] = rmax * static_cast<double>(k) / static_cast<double>(n_radii - 1);
  auto table = PsiTable::from_estimates(small_ball_table(m, radii, n, seed));
  // the largest radius is certain to contain (numerically) all the mass
  table.psi.back() = std::max(table.psi.back(), 1.0);
  return table;
}

namespace detail {

struct ReplicaOutcome {
  double value = 0.0, baseline = 0.0;
  bool diverged = false;
  std::string solver;
};

}  // namespace detail

/// Runs the full pipeline. Deterministic given config.seed (independent of
/// the thread count).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.config = cfg;
  const auto pot = cfg.make_potential();
  const auto mu = make_invariant(cfg.spectrum, pot, 20000, derive_seed(cfg.seed, 0x2f));
  SimConfig base{cfg.spectrum, pot};
  if (!pot.is_zero()) base.dt = std::min(cfg.dt, base.stability_limit());

  res.simulated.label = "simulated_distance";
  res.baseline.label = "same_law_baseline";
  for (std::size_t ti = 0; ti < cfg.t_grid.size(); ++ti) {
    const double t = cfg.t_grid[ti];
    const std::size_t np = cfg.points_at(t), nr = cfg.ref_at(t);
    std::vector<detail::ReplicaOutcome> out(cfg.replicas);
    parallel_for(cfg.replicas, cfg.threads, [&](std::size_t r) {
      SimConfig sc = base;
      sc.t_max = t;
      sc.seed = derive_seed(cfg.seed, ti, r);
      sc.initial = StationaryStart{};
      const auto times = occupation_times(t, np);
      PathSample path;
      try {
        path = simulate(sc, times);
      } catch (const SimulationDiverged&) {
        out[r].diverged = true;
        return;
      }
      const auto meas = occupation_measure(path, t, np);
      const auto ref = EmpiricalMeasure::uniform(draw_mu(mu, nr, derive_seed(sc.seed, 1)));
      const auto d = distance(meas, ref, cfg.cost);
      const auto twin = EmpiricalMeasure::uniform(draw_mu(mu, np, derive_seed(sc.seed, 2)));
      const auto ref2 = EmpiricalMeasure::uniform(draw_mu(mu, nr, derive_seed(sc.seed, 3)));
      out[r] = {d.value, distance(twin, ref2, cfg.cost).value, false, d.solver};
    });
    TimePoint tp{t, np, nr, {}, {}, 0, {}};
    std::vector<double> v, b;
    for (const auto& o : out) {
      if (o.diverged) {
        ++tp.diverged;
        continue;
      }
      v.push_back(o.value);
      b.push_back(o.baseline);
      tp.solver = o.solver;
    }
    if (10 * tp.diverged > cfg.replicas)
      throw NumericalError("experiment: " + std::to_string(tp.diverged) + " of " + std::to_string(cfg.replicas) +
                           " replicas diverged at t = " + std::to_string(t));
    if (v.size() < 2) throw NumericalError("experiment: fewer than 2 finished replicas");
    tp.distance = summarize(v);
    tp.baseline = summarize(b);
    res.points.push_back(tp);
    res.simulated.t_grid.push_back(t);
    res.simulated.values.push_back(tp.distance.value);
    res.simulated.std_errors.push_back(tp.distance.std_error);
    res.baseline.t_grid.push_back(t);
    res.baseline.values.push_back(tp.baseline.value);
    res.baseline.std_errors.push_back(tp.baseline.std_error);
  }

  const bool fittable = cfg.t_grid.size() >= 4 && cfg.t_grid.front() > std::numbers::e;
  if (fittable) {
    fit_exponent(res.simulated);
    fit_exponent(res.baseline);
  }

  if (cfg.analytic) {
    if (pot.is_zero()) res.xi = xi_curve(cfg.spectrum, cfg.consts, cfg.t_grid);
    if (cfg.t_grid.front() > 1.0) {
      res.eta = eta_curve(cfg.spectrum, pot.gamma, cfg.k_eta, cfg.t_grid);
      res.psi = build_psi_table(mu, cfg.psi_samples, cfg.psi_radii, derive_seed(cfg.seed, 0x7e));
      res.lower = lower_curve(*res.psi, cfg.spectrum, cfg.consts, cfg.t_grid, cfg.lower_n_max, cfg.cost.cap);
    }
    if (fittable) {
      if (res.xi) fit_exponent(*res.xi);
      if (res.eta) fit_exponent(*res.eta);
    }
  }
  res.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// Persistence ---------------------------------------------------------------------

inline void write_experiment_csv(std::ostream& os, const ExperimentResult& r) {
  os.precision(17);
  os << "t,n_points,n_ref,value,stderr,baseline,baseline_stderr,replicas,diverged";
  if (r.xi) os << ",xi";
  if (r.eta) os << ",eta";
  if (r.lower) os << ",lower";
  os << '\n';
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const auto& p = r.points[k];
    os << p.t << ',' << p.n_points << ',' << p.n_ref << ',' << p.distance.value << ',' << p.distance.std_error << ','
       << p.baseline.value << ',' << p.baseline.std_error << ',' << p.distance.count << ',' << p.diverged;
    if (r.xi) os << ',' << r.xi->values[k];
    if (r.eta) os << ',' << r.eta->values[k];
    if (r.lower) os << ',' << r.lower->values[k];
    os << '\n';
  }
}

inline void write_psi_csv(std::ostream& os, const PsiTable& psi) {
  os.precision(17);
  os << "r,psi\n";
  for (std::size_t k = 0; k < psi.r.size(); ++k) os << psi.r[k] << ',' << psi.psi[k] << '\n';
}

inline PsiTable read_psi_csv(std::istream& is) {
  PsiTable t;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "psi csv: expected two columns");
    t.r.push_back(std::stod(line.substr(0, comma)));
    t.psi.push_back(std::stod(line.substr(comma + 1)));
  }
  t.validate();
  return t;
}

inline void write_path_csv(std::ostream& os, const PathSample& path) {
  os.precision(17);
  os << "time";
  for (std::size_t i = 1; i <= path.states.dim(); ++i) os << ",mode_" << i;
  os << '\n';
  for (std::size_t k = 0; k < path.size(); ++k) {
    os << path.times[k];
    for (double v : path.state(k)) os << ',' << v;
    os << '\n';
  }
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw Error("cannot open " + file.string() + " for writing");
  os << text;
}

/// Writes experiment.csv, one CSV per curve, psi.csv and experiment.json
/// (the only file carrying a timestamp) under dir.
inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& r) {
  std::filesystem::create_directories(dir);
  auto emit = [&](const std::string& name, auto&& writer) {
    std::ostringstream os;
    writer(os);
    write_text(dir / name, os.str());
  };
  emit("experiment.csv", [&](std::ostream& os) { write_experiment_csv(os, r); });
  emit("simulated.csv", [&](std::ostream& os) { r.simulated.write_csv(os); });
  emit("baseline.csv", [&](std::ostream& os) { r.baseline.write_csv(os); });
  nlohmann::json curves = nlohmann::json::array({r.simulated.meta(), r.baseline.meta()});
  for (const auto* c : {&r.xi, &r.eta, &r.lower}) {
    if (!*c) continue;
    emit((*c)->label + ".csv", [&](std::ostream& os) { (*c)->write_csv(os); });
    curves.push_back((*c)->meta());
  }
  if (r.psi) emit("psi.csv", [&](std::ostream& os) { write_psi_csv(os, *r.psi); });
  nlohmann::json j{{"config", r.config.to_json()}, {"curves", curves}, {"fingerprint", r.fingerprint()}};
  write_text(dir / "experiment.json", j.dump(2) + "\n");
}

}  // namespace spdelab
