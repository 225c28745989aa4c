#pragma once

// Dense rectangular linear assignment by shortest augmenting paths
// (Jonker-Volgenant style dual updates, one Dijkstra sweep per row).

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace spdelab::detail {

/// Minimizes sum_i cost[i, col_for_row[i]] over injective maps rows -> cols.
/// cost is row-major nr x nc with nr <= nc. Returns col_for_row.
class AssignmentSolver {
 public:
  AssignmentSolver(std::span<const double> cost, std::size_t nr, std::size_t nc)
      : c_(cost), nr_(nr), nc_(nc) {
    if (nr > nc) throw std::invalid_argument("assignment: more rows than columns");
    if (cost.size() != nr * nc) throw std::invalid_argument("assignment: cost size mismatch");
  }

  std::vector<std::ptrdiff_t> solve() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    u_.assign(nr_, 0.0);
    v_.assign(nc_, 0.0);
    dist_.assign(nc_, inf);
    path_.assign(nc_, -1);
    col4row_.assign(nr_, -1);
    row4col_.assign(nc_, -1);
    remaining_.resize(nc_);
    scanned_rows_.reserve(nr_);
    scanned_cols_.reserve(nc_);

    for (std::size_t row = 0; row < nr_; ++row) {
      double min_val = 0.0;
      const std::ptrdiff_t sink = shortest_path(row, min_val);
      if (sink < 0) throw std::runtime_error("assignment: infeasible cost matrix");

      // dual update on the scanned sets
      u_[row] += min_val;
      for (std::size_t i : scanned_rows_)
        if (i != row) u_[i] += min_val - dist_[static_cast<std::size_t>(col4row_[i])];
      for (std::size_t j : scanned_cols_) v_[j] -= min_val - dist_[j];

      // augment along the alternating path
      std::ptrdiff_t j = sink;
      for (;;) {
        const auto i = static_cast<std::size_t>(path_[static_cast<std::size_t>(j)]);
        row4col_[static_cast<std::size_t>(j)] = static_cast<std::ptrdiff_t>(i);
        std::swap(col4row_[i], j);
        if (i == row) break;
      }
    }
    return col4row_;
  }

 private:
  std::ptrdiff_t shortest_path(std::size_t row, double& min_val) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    scanned_rows_.clear();
    scanned_cols_.clear();
    std::size_t n_rem = nc_;
    for (std::size_t k = 0; k < nc_; ++k) remaining_[k] = nc_ - k - 1;
    std::fill(dist_.begin(), dist_.end(), inf);

    std::ptrdiff_t sink = -1;
    std::size_t i = row;
    while (sink < 0) {
      scanned_rows_.push_back(i);
      const double* ci = c_.data() + i * nc_;
      const double base = min_val - u_[i];
      std::size_t best = 0;
      double lowest = inf;
      for (std::size_t k = 0; k < n_rem; ++k) {
        const std::size_t j = remaining_[k];
        const double r = base + ci[j] - v_[j];
        if (r < dist_[j]) {
          path_[j] = static_cast<std::ptrdiff_t>(i);
          dist_[j] = r;
        }
        if (dist_[j] < lowest || (dist_[j] == lowest && row4col_[j] < 0)) {
          lowest = dist_[j];
          best = k;
        }
      }
      min_val = lowest;
      if (min_val == inf) return -1;
      const std::size_t j = remaining_[best];
      if (row4col_[j] < 0)
        sink = static_cast<std::ptrdiff_t>(j);
      else
        i = static_cast<std::size_t>(row4col_[j]);
      scanned_cols_.push_back(j);
      remaining_[best] = remaining_[--n_rem];
    }
    return sink;
  }

  std::span<const double> c_;
  std::size_t nr_, nc_;
  std::vector<double> u_, v_, dist_;
  std::vector<std::ptrdiff_t> path_, col4row_, row4col_;
  std::vector<std::size_t> remaining_, scanned_rows_, scanned_cols_;
};

inline std::vector<std::ptrdiff_t> solve_assignment(std::span<const double> cost, std::size_t nr, std::size_t nc) {
  return AssignmentSolver(cost, nr, nc).solve();
}

}  // namespace spdelab::detail
