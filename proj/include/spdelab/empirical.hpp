#pragma once

// Empirical measures of a path: the occupation measure mu_t, its smoothing
// mu_t P_eps, and the N-point time discretization mu_{t,N}.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/simulator.hpp"
#include "spdelab/spectrum.hpp"

namespace spdelab {

enum class MeasureKind { Raw, Smoothed, Discretized, Sample };

inline const char* to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::Raw: return "raw";
    case MeasureKind::Smoothed: return "smoothed";
    case MeasureKind::Discretized: return "discretized";
    case MeasureKind::Sample: return "sample";
  }
  return "?";
}

struct MeasureMeta {
  MeasureKind kind = MeasureKind::Sample;
  double t = 0.0;
  double eps = 0.0;    // smoothed only
  std::size_t n = 0;   // discretized only
};

/// Weighted point cloud. Weights are nonnegative and sum to one.
struct EmpiricalMeasure {
  PointCloud points;
  std::vector<double> weights;
  MeasureMeta meta;

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return points.dim(); }

  bool uniform_weights() const {
    for (double w : weights)
      if (w != weights.front()) return false;
    return true;
  }

  void validate() const {
    require(!points.empty(), "EmpiricalMeasure: empty support");
    require(weights.size() == points.size(), "EmpiricalMeasure: weight count mismatch");
    double s = 0.0;
    for (double w : weights) {
      require(w >= 0 && std::isfinite(w), "EmpiricalMeasure: weights must be finite and nonnegative");
      s += w;
    }
    require(std::abs(s - 1.0) <= 1e-12 * static_cast<double>(weights.size()) + 1e-12,
            "EmpiricalMeasure: weights must sum to 1");
    require(all_finite(points.data()), "EmpiricalMeasure: non-finite support point");
  }

  static EmpiricalMeasure uniform(PointCloud pts, MeasureMeta meta = {}) {
    require(!pts.empty(), "EmpiricalMeasure: empty support");
    EmpiricalMeasure m;
    m.weights.assign(pts.size(), 1.0 / static_cast<double>(pts.size()));
    m.points = std::move(pts);
    m.meta = meta;
    return m;
  }

  /// Weighted mean of coordinate i.
  double mean(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = 0; k < size(); ++k) s += weights[k] * points[k][i];
    return s;
  }
};

/// Midpoint quadrature nodes (j - 1/2) t / n, j = 1..n.
inline std::vector<double> occupation_times(double t, std::size_t n_points) {
  require(t > 0 && n_points >= 1, "occupation_times: need t > 0 and n_points >= 1");
  std::vector<double> out(n_points);
  for (std::size_t j = 0; j < n_points; ++j) out[j] = (static_cast<double>(j) + 0.5) * t / static_cast<double>(n_points);
  return out;
}

/// Left-endpoint grid (i - 1) t / n, i = 1..n.
inline std::vector<double> discretization_times(double t, std::size_t n) {
  require(t > 0 && n >= 1, "discretization_times: need t > 0 and n >= 1");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(i) * t / static_cast<double>(n);
  return out;
}

/// Default support size of mu_t: max(256, 16 ceil(t)).
inline std::size_t default_occupation_points(double t) {
  return std::max<std::size_t>(256, 16 * static_cast<std::size_t>(std::ceil(t)));
}

namespace detail {

inline EmpiricalMeasure gather(const PathSample& path, std::span<const double> times, MeasureMeta meta) {
  PointCloud pts(times.size(), path.states.dim());
  for (std::size_t j = 0; j < times.size(); ++j) {
    const auto k = path.index_of(times[j]);
    std::copy(path.state(k).begin(), path.state(k).end(), pts[j].begin());
  }
  return EmpiricalMeasure::uniform(std::move(pts), meta);
}

}  // namespace detail

/// mu_t = (1/t) int_0^t delta_{X_s} ds by the midpoint rule on n_points nodes.
inline EmpiricalMeasure occupation_measure(const PathSample& path, double t, std::size_t n_points) {
  const auto times = occupation_times(t, n_points);
  return detail::gather(path, times, {MeasureKind::Raw, t, 0.0, 0});
}

/// mu_{t,N} = (1/N) sum_i delta_{X_{t_i}}, t_i = (i - 1) t / N.
inline EmpiricalMeasure discretize_time(const PathSample& path, double t, std::size_t n) {
  const auto times = discretization_times(t, n);
  return detail::gather(path, times, {MeasureKind::Discretized, t, 0.0, n});
}

/// mu P_eps for V = 0: every atom is replaced by `draws_per_point` draws of the
/// exact eps-transition from it.
inline EmpiricalMeasure smooth(const EmpiricalMeasure& meas, const SpectrumModel& spec, double eps, std::uint64_t seed,
                               std::size_t draws_per_point) {
  if (draws_per_point < 1) throw PreconditionError("smooth: draws_per_point must be >= 1");
  require(eps > 0, "smooth: eps must be positive");
  require(meas.dim() == spec.dim(), "smooth: dimension mismatch");
  const StepCoefficients c(spec.retained(), eps);
  NormalSource gen(seed);
  EmpiricalMeasure out;
  out.points = PointCloud(meas.size() * draws_per_point, meas.dim());
  out.weights.resize(out.points.size());
  std::vector<double> noise(meas.dim());
  for (std::size_t k = 0; k < meas.size(); ++k) {
    for (std::size_t j = 0; j < draws_per_point; ++j) {
      const std::size_t q = k * draws_per_point + j;
      auto y = out.points[q];
      std::copy(meas.points[k].begin(), meas.points[k].end(), y.begin());
      gen.fill(noise);
      detail::ou_apply(c, y, noise);
      out.weights[q] = meas.weights[k] / static_cast<double>(draws_per_point);
    }
  }
  out.meta = meas.meta;
  out.meta.kind = MeasureKind::Smoothed;
  out.meta.eps = eps;
  return out;
}

// Persistence -------------------------------------------------------------------

/// CSV rows "weight,mode_1,...,mode_d" with a header line.
inline void write_csv(std::ostream& os, const EmpiricalMeasure& m) {
  os << "weight";
  for (std::size_t i = 1; i <= m.dim(); ++i) os << ",mode_" << i;
  os << '\n';
  os.precision(17);
  for (std::size_t k = 0; k < m.size(); ++k) {
    os << m.weights[k];
    for (double v : m.points[k]) os << ',' << v;
    os << '\n';
  }
}

/// Reads the CSV written by write_csv. A file without a weight column (header
/// starting with "mode_") is read as an equal-weight cloud.
inline EmpiricalMeasure read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw PreconditionError("read_csv: empty input");
  const bool weighted = line.rfind("weight", 0) == 0;
  EmpiricalMeasure m;
  std::vector<double> row;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    row.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw PreconditionError("read_csv: bad number on line " + std::to_string(line_no));
      }
    }
    if (weighted) {
      require(row.size() >= 2, "read_csv: row without coordinates on line " + std::to_string(line_no));
      m.weights.push_back(row.front());
      m.points.push_back(std::span<const double>(row).subspan(1));
    } else {
      m.points.push_back(row);
    }
  }
  if (!weighted) m.weights.assign(m.points.size(), m.points.empty() ? 0.0 : 1.0 / static_cast<double>(m.points.size()));
  m.validate();
  return m;
}

inline nlohmann::json meta_to_json(const MeasureMeta& meta) {
  nlohmann::json j{{"kind", to_string(meta.kind)}, {"t", meta.t}};
  if (meta.kind == MeasureKind::Smoothed) j["eps"] = meta.eps;
  if (meta.kind == MeasureKind::Discretized) j["n"] = meta.n;
  return j;
}

}  // namespace spdelab
