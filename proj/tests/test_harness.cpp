#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spdelab/harness.hpp"

using namespace spdelab;
using nlohmann::json;

namespace {

ExperimentConfig small_config() {
  auto c = ExperimentConfig::from_json(json::parse(R"({
    "spectrum": {"kind": "power", "c": 1.0, "p": 2.0, "dim": 8},
    "t_grid": [4, 8, 16, 32],
    "replicas": 4,
    "n_points": 64,
    "psi_samples": 2000,
    "psi_radii": 24,
    "lower_n_max": 16,
    "seed": 99
  })"));
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Harness, DefaultsAndPointCounts) {
  ExperimentConfig c;
  EXPECT_EQ(c.t_grid.size(), 6u);
  EXPECT_NEAR(c.t_grid.front(), std::exp(2.0), 1e-9);
  EXPECT_NEAR(c.t_grid.back(), std::exp(7.0), 1e-6);
  EXPECT_EQ(c.replicas, 32u);
  EXPECT_EQ(c.points_at(3.0), 256u);
  EXPECT_EQ(c.points_at(100.0), 1600u);
  EXPECT_EQ(c.points_at(1000.0), 2048u);
  EXPECT_EQ(c.ref_at(100.0), 1600u);
  c.n_ref = 10;
  EXPECT_EQ(c.ref_at(100.0), 10u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Harness, JsonRoundTrip) {
  const auto j = json::parse(R"({
    "spectrum": {"kind": "power", "c": 1.0, "p": 3.0, "dim": 16},
    "potential": {"kind": "zero"},
    "cost": {"p": 2, "cap": 1.5},
    "t_grid": {"log_lo": 3, "log_hi": 5},
    "replicas": 5, "n_points": 100, "seed": 7,
    "constants": {"k_lower": 2.0}
  })");
  const auto c = ExperimentConfig::from_json(j);
  EXPECT_EQ(c.spectrum.dim(), 16u);
  EXPECT_EQ(c.cost.power, 2.0);
  ASSERT_TRUE(c.cost.cap.has_value());
  EXPECT_EQ(*c.cost.cap, 1.5);
  ASSERT_EQ(c.t_grid.size(), 3u);
  EXPECT_NEAR(c.t_grid[1], std::exp(4.0), 1e-9);
  EXPECT_EQ(c.consts.k_lower, 2.0);
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.t_grid, c.t_grid);
  EXPECT_EQ(back.seed, 7u);

  auto uncapped = ExperimentConfig::from_json(json::parse(R"({"cost": {"p": 1, "cap": null}})"));
  EXPECT_FALSE(uncapped.cost.cap.has_value());
}

TEST(Harness, ValidateRejects) {
  auto c = small_config();
  c.replicas = 1;
  EXPECT_THROW(run_experiment(c), PreconditionError);
  c = small_config();
  c.t_grid = {4, 2};
  EXPECT_THROW(c.validate(), PreconditionError);
  c.t_grid = {};
  EXPECT_THROW(c.validate(), PreconditionError);
  c = small_config();
  c.dt = 0;
  EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(Harness, SmallRunDeterministicAndComplete) {
  const auto cfg = small_config();
  const auto a = run_experiment(cfg);
  ASSERT_EQ(a.points.size(), 4u);
  for (const auto& p : a.points) {
    EXPECT_EQ(p.distance.count, 4u);
    EXPECT_GT(p.distance.value, 0.0);
    EXPECT_GE(p.distance.std_error, 0.0);
    EXPECT_EQ(p.n_points, 64u);
    EXPECT_EQ(p.diverged, 0u);
    EXPECT_EQ(p.solver, "assignment");
  }
  EXPECT_TRUE(a.simulated.exponent_fit.has_value());
  ASSERT_TRUE(a.xi && a.eta && a.lower && a.psi);
  EXPECT_EQ(a.xi->values.size(), 4u);

  auto cfg2 = cfg;
  cfg2.threads = 3;
  const auto b = run_experiment(cfg2);
  std::ostringstream sa, sb;
  write_experiment_csv(sa, a);
  write_experiment_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());

  auto cfg3 = cfg;
  cfg3.seed = 100;
  std::ostringstream sc;
  write_experiment_csv(sc, run_experiment(cfg3));
  EXPECT_NE(sa.str(), sc.str());
}

TEST(Harness, WritesResultTree) {
  const auto r = run_experiment(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "spdelab_harness_test";
  std::filesystem::remove_all(dir);
  write_experiment(dir, r);
  for (const char* f : {"experiment.csv", "simulated.csv", "baseline.csv", "xi_t.csv", "eta_t.csv", "lower_bound.csv",
                        "psi.csv", "experiment.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto j = json::parse(slurp(dir / "experiment.json"));
  EXPECT_EQ(j["fingerprint"]["seed"], 99);
  EXPECT_EQ(j["fingerprint"]["version"], kVersion);
  EXPECT_TRUE(j["fingerprint"].contains("timestamp"));
  EXPECT_EQ(slurp(dir / "experiment.csv").find("T"), std::string::npos);

  std::ifstream is(dir / "psi.csv");
  const auto psi = read_psi_csv(is);
  EXPECT_EQ(psi.r.size(), r.psi->r.size());
  EXPECT_EQ(psi.psi.back(), r.psi->psi.back());
  std::filesystem::remove_all(dir);
}

TEST(Harness, PathCsv) {
  SimConfig sc{SpectrumModel::power_law(1, 2, 2)};
  sc.t_max = 1.0;
  const auto path = simulate(sc, {0.5, 1.0});
  std::ostringstream os;
  write_path_csv(os, path);
  const auto s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "time,mode_1,mode_2");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}
