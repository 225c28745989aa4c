#pragma once

// Primal network simplex for the dense uncapacitated transportation problem
// (block search pivoting, spanning tree kept as a thread list with reverse
// thread, subtree sizes and last successors). Supplies are integers so the
// flow bookkeeping is exact; costs are doubles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace spdelab::detail {

enum class SimplexStatus { Optimal, Infeasible, IterationLimit };

class TransportSimplex {
 public:
  using Flow = std::int64_t;

  /// cost is row-major n0 x n1; supply (length n0) and demand (length n1) must
  /// have equal sums.
  TransportSimplex(std::span<const double> cost, std::span<const Flow> supply, std::span<const Flow> demand)
      : cost_(cost), n0_(static_cast<Index>(supply.size())), n1_(static_cast<Index>(demand.size())) {
    if (cost.size() != supply.size() * demand.size()) throw std::invalid_argument("network simplex: cost size mismatch");
    node_num_ = n0_ + n1_;
    arc_num_ = n0_ * n1_;
    supply_.resize(static_cast<std::size_t>(node_num_ + 1));
    for (Index i = 0; i < n0_; ++i) supply_[idx(i)] = supply[idx(i)];
    for (Index j = 0; j < n1_; ++j) supply_[idx(n0_ + j)] = -demand[idx(j)];
  }

  SimplexStatus run(std::uint64_t max_iter = std::numeric_limits<std::uint64_t>::max()) {
    Flow total = 0;
    for (Index u = 0; u < node_num_; ++u) total += supply_[idx(u)];
    if (total != 0) return SimplexStatus::Infeasible;
    init();
    if (!initial_pivots()) return SimplexStatus::Infeasible;
    iterations_ = 0;
    while (find_entering_arc()) {
      if (iterations_++ >= max_iter) return SimplexStatus::IterationLimit;
      pivot();
    }
    for (Index u = 0; u < node_num_; ++u)
      if (flow_[idx(arc_num_ + u)] != 0) return SimplexStatus::Infeasible;
    return SimplexStatus::Optimal;
  }

  Flow flow(std::size_t i, std::size_t j) const { return flow_[i * static_cast<std::size_t>(n1_) + j]; }
  std::uint64_t iterations() const { return iterations_; }

  /// Node potentials; reduced cost c_ij + pi_i - pi_{n0 + j} is >= 0 at optimum.
  double potential(std::size_t node) const { return pi_[node]; }

 private:
  using Index = std::int64_t;
  static constexpr signed char kLower = 1, kTree = 0;
  static constexpr Flow kInf = std::numeric_limits<Flow>::max();

  static std::size_t idx(Index i) { return static_cast<std::size_t>(i); }

  Index source(Index a) const { return a < arc_num_ ? a / n1_ : art_source_[idx(a - arc_num_)]; }
  Index target(Index a) const { return a < arc_num_ ? n0_ + a % n1_ : art_target_[idx(a - arc_num_)]; }
  double cost(Index a) const { return a < arc_num_ ? cost_[idx(a)] : art_cost_[idx(a - arc_num_)]; }

  void init() {
    const auto nodes = idx(node_num_ + 1);
    const auto arcs = idx(arc_num_ + node_num_);
    pi_.assign(nodes, 0.0);
    parent_.assign(nodes, -1);
    pred_.assign(nodes, -1);
    thread_.assign(nodes, 0);
    rev_thread_.assign(nodes, 0);
    succ_num_.assign(nodes, 0);
    last_succ_.assign(nodes, 0);
    forward_.assign(nodes, 0);
    flow_.assign(arcs, 0);
    state_.assign(arcs, kLower);
    art_source_.assign(idx(node_num_), 0);
    art_target_.assign(idx(node_num_), 0);
    art_cost_.assign(idx(node_num_), 0.0);

    double max_cost = 0.0;
    for (double c : cost_) max_cost = std::max(max_cost, std::abs(c));
    const double art = (max_cost + 1.0) * static_cast<double>(node_num_);

    const Index root = node_num_;
    parent_[idx(root)] = -1;
    pred_[idx(root)] = -1;
    thread_[idx(root)] = 0;
    rev_thread_[0] = root;
    succ_num_[idx(root)] = node_num_ + 1;
    last_succ_[idx(root)] = root - 1;
    supply_[idx(root)] = 0;
    pi_[idx(root)] = 0;

    for (Index u = 0; u < node_num_; ++u) {
      const Index e = arc_num_ + u;
      parent_[idx(u)] = root;
      pred_[idx(u)] = e;
      thread_[idx(u)] = u + 1;
      rev_thread_[idx(u + 1)] = u;
      succ_num_[idx(u)] = 1;
      last_succ_[idx(u)] = u;
      state_[idx(e)] = kTree;
      if (supply_[idx(u)] >= 0) {
        forward_[idx(u)] = 1;
        pi_[idx(u)] = 0;
        art_source_[idx(u)] = u;
        art_target_[idx(u)] = root;
        flow_[idx(e)] = supply_[idx(u)];
        art_cost_[idx(u)] = 0;
      } else {
        forward_[idx(u)] = 0;
        pi_[idx(u)] = art;
        art_source_[idx(u)] = root;
        art_target_[idx(u)] = u;
        flow_[idx(e)] = -supply_[idx(u)];
        art_cost_[idx(u)] = art;
      }
    }
    next_arc_ = 0;
    block_size_ = std::max<Index>(static_cast<Index>(std::sqrt(static_cast<double>(arc_num_))), 10);
  }

  double reduced(Index a) const { return state_[idx(a)] * (cost(a) + pi_[idx(source(a))] - pi_[idx(target(a))]); }

  bool significant(double c) const {
    const double scale = std::max({std::abs(pi_[idx(source(in_arc_))]), std::abs(pi_[idx(target(in_arc_))]),
                                   std::abs(cost(in_arc_))});
    return c < -1e-14 * scale;
  }

  bool find_entering_arc() {
    double min = 0.0;
    Index e = next_arc_;
    Index cnt = block_size_;
    for (Index k = 0; k < arc_num_; ++k, ++e) {
      if (e == arc_num_) e = 0;
      const double c = reduced(e);
      if (c < min) {
        min = c;
        in_arc_ = e;
      }
      if (--cnt == 0) {
        if (min < 0 && significant(min)) {
          next_arc_ = e;
          return true;
        }
        cnt = block_size_;
      }
    }
    if (min < 0 && significant(min)) {
      next_arc_ = e;
      return true;
    }
    return false;
  }

  // One pivot per sink: its cheapest incoming arc.
  bool initial_pivots() {
    for (Index v = 0; v < n1_; ++v) {
      Index best = -1;
      double best_cost = std::numeric_limits<double>::infinity();
      for (Index u = 0; u < n0_; ++u) {
        const double c = cost_[idx(u * n1_ + v)];
        if (c < best_cost) {
          best_cost = c;
          best = u * n1_ + v;
        }
      }
      if (best < 0) continue;
      in_arc_ = best;
      if (reduced(in_arc_) >= 0) continue;
      if (!pivot()) return false;
    }
    return true;
  }

  bool pivot() {
    find_join_node();
    const bool change = find_leaving_arc();
    if (delta_ == kInf) return false;
    change_flow(change);
    if (change) {
      update_tree();
      update_potential();
    }
    return true;
  }

  void find_join_node() {
    Index u = source(in_arc_), v = target(in_arc_);
    while (u != v) {
      if (succ_num_[idx(u)] < succ_num_[idx(v)])
        u = parent_[idx(u)];
      else
        v = parent_[idx(v)];
    }
    join_ = u;
  }

  bool find_leaving_arc() {
    Index first, second;
    if (state_[idx(in_arc_)] == kLower) {
      first = source(in_arc_);
      second = target(in_arc_);
    } else {
      first = target(in_arc_);
      second = source(in_arc_);
    }
    delta_ = kInf;
    int result = 0;
    for (Index u = first; u != join_; u = parent_[idx(u)]) {
      const Flow d = forward_[idx(u)] ? flow_[idx(pred_[idx(u)])] : kInf;
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (Index u = second; u != join_; u = parent_[idx(u)]) {
      const Flow d = forward_[idx(u)] ? kInf : flow_[idx(pred_[idx(u)])];
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
    return result != 0;
  }

  void change_flow(bool change) {
    if (delta_ > 0) {
      const Flow val = state_[idx(in_arc_)] * delta_;
      flow_[idx(in_arc_)] += val;
      for (Index u = source(in_arc_); u != join_; u = parent_[idx(u)])
        flow_[idx(pred_[idx(u)])] += forward_[idx(u)] ? -val : val;
      for (Index u = target(in_arc_); u != join_; u = parent_[idx(u)])
        flow_[idx(pred_[idx(u)])] += forward_[idx(u)] ? val : -val;
    }
    if (change) {
      state_[idx(in_arc_)] = kTree;
      state_[idx(pred_[idx(u_out_)])] = kLower;
    } else {
      state_[idx(in_arc_)] = static_cast<signed char>(-state_[idx(in_arc_)]);
    }
  }

  void update_tree() {
    Index u = last_succ_[idx(u_in_)];
    const Index old_rev_thread = rev_thread_[idx(u_out_)];
    const Index old_succ_num = succ_num_[idx(u_out_)];
    const Index old_last_succ = last_succ_[idx(u_out_)];
    const Index v_out = parent_[idx(u_out_)];
    Index right = thread_[idx(u)];
    Index last;

    if (old_rev_thread == v_in_)
      last = thread_[idx(last_succ_[idx(u_out_)])];
    else
      last = thread_[idx(v_in_)];

    // re-hang the stem u_in .. u_out below v_in
    Index stem = u_in_, par_stem = v_in_;
    thread_[idx(v_in_)] = stem;
    dirty_revs_.clear();
    dirty_revs_.push_back(v_in_);
    while (stem != u_out_) {
      const Index new_stem = parent_[idx(stem)];
      thread_[idx(u)] = new_stem;
      dirty_revs_.push_back(u);

      const Index w = rev_thread_[idx(stem)];
      thread_[idx(w)] = right;
      rev_thread_[idx(right)] = w;

      parent_[idx(stem)] = par_stem;
      par_stem = stem;
      stem = new_stem;

      u = last_succ_[idx(stem)] == last_succ_[idx(par_stem)] ? rev_thread_[idx(par_stem)] : last_succ_[idx(stem)];
      right = thread_[idx(u)];
    }
    parent_[idx(u_out_)] = par_stem;
    thread_[idx(u)] = last;
    rev_thread_[idx(last)] = u;
    last_succ_[idx(u_out_)] = u;

    if (old_rev_thread != v_in_) {
      thread_[idx(old_rev_thread)] = right;
      rev_thread_[idx(right)] = old_rev_thread;
    }
    for (Index d : dirty_revs_) rev_thread_[idx(thread_[idx(d)])] = d;

    // preds, directions, subtree sizes and last successors along the stem
    Index tmp_sc = 0, tmp_ls = last_succ_[idx(u_out_)];
    for (u = u_out_; u != u_in_;) {
      const Index w = parent_[idx(u)];
      pred_[idx(u)] = pred_[idx(w)];
      forward_[idx(u)] = !forward_[idx(w)];
      tmp_sc += succ_num_[idx(u)] - succ_num_[idx(w)];
      succ_num_[idx(u)] = tmp_sc;
      last_succ_[idx(w)] = tmp_ls;
      u = w;
    }
    pred_[idx(u_in_)] = in_arc_;
    forward_[idx(u_in_)] = u_in_ == source(in_arc_);
    succ_num_[idx(u_in_)] = old_succ_num;

    Index up_limit_in = -1, up_limit_out = -1;
    if (last_succ_[idx(join_)] == v_in_)
      up_limit_out = join_;
    else
      up_limit_in = join_;

    for (u = v_in_; u != up_limit_in && last_succ_[idx(u)] == v_in_; u = parent_[idx(u)])
      last_succ_[idx(u)] = last_succ_[idx(u_out_)];

    const Index replacement = (join_ != old_rev_thread && v_in_ != old_rev_thread) ? old_rev_thread
                                                                                     : last_succ_[idx(u_out_)];
    for (u = v_out; u != up_limit_out && last_succ_[idx(u)] == old_last_succ; u = parent_[idx(u)])
      last_succ_[idx(u)] = replacement;

    for (u = v_in_; u != join_; u = parent_[idx(u)]) succ_num_[idx(u)] += old_succ_num;
    for (u = v_out; u != join_; u = parent_[idx(u)]) succ_num_[idx(u)] -= old_succ_num;
  }

  void update_potential() {
    const Index e = pred_[idx(u_in_)];
    const double sigma = forward_[idx(u_in_)] ? pi_[idx(v_in_)] - pi_[idx(u_in_)] - cost(e)
                                              : pi_[idx(v_in_)] - pi_[idx(u_in_)] + cost(e);
    const Index end = thread_[idx(last_succ_[idx(u_in_)])];
    for (Index u = u_in_; u != end; u = thread_[idx(u)]) pi_[idx(u)] += sigma;
  }

  std::span<const double> cost_;
  Index n0_, n1_, node_num_ = 0, arc_num_ = 0;
  std::vector<Flow> supply_;

  std::vector<double> pi_;
  std::vector<Index> parent_, pred_, thread_, rev_thread_, succ_num_, last_succ_;
  std::vector<char> forward_;
  std::vector<Flow> flow_;
  std::vector<signed char> state_;
  std::vector<Index> art_source_, art_target_;
  std::vector<double> art_cost_;
  std::vector<Index> dirty_revs_;

  Index next_arc_ = 0, block_size_ = 10;
  Index in_arc_ = 0, join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0;
  Flow delta_ = 0;
  std::uint64_t iterations_ = 0;
};

}  // namespace spdelab::detail
