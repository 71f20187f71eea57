// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "straggler/dep_graph.hpp"
#include "straggler/error.hpp"
#include "straggler/log.hpp"
#include "straggler/trace.hpp"

namespace straggler {

// ---------------------------------------------------------------------------
// Durations
// ---------------------------------------------------------------------------

/// Per-node durations: end - start for compute ops, transfer-duration for
/// communication ops (end minus the latest start among its group peers,
/// clamped at zero).
struct NodeDurations {
  std::vector<Duration> values;
  std::size_t clamped = 0;
};

inline NodeDurations node_durations(const Trace& trace, const DepGraph& graph) {
  const Layout& L = graph.layout();
  const std::vector<std::size_t> pos = index_records(trace, L);
  NodeDurations out;
  out.values.resize(L.size());
  for (std::size_t v = 0; v < L.size(); ++v) {
    const OpRecord& r = trace.records[pos[v]];
    const std::size_t g = graph.group_of(v);
    if (g == DepGraph::kNoGroup) {
      out.values[v] = r.duration();
      continue;
    }
    Timestamp latest = r.start;
    for (std::size_t m : graph.groups()[g].members)
      latest = std::max(latest, trace.records[pos[m]].start);
    if (r.end < latest) {
      ++out.clamped;
      log().warn("{} ends {}us before its last peer launches; transfer-duration clamped to 0",
                 r.key().str(), latest - r.end);
      out.values[v] = 0;
    } else {
      out.values[v] = static_cast<Duration>(r.end - latest);
    }
  }
  return out;
}

/// Slices a per-node duration vector into one tensor per op type.
inline std::vector<OpDurationTensor> to_tensors(const Layout& L, std::span<const Duration> per_node) {
  std::vector<OpDurationTensor> out;
  for (OpType t : kAllOpTypes) {
    const auto first = per_node.begin() + static_cast<std::ptrdiff_t>(L.offset(t));
    out.emplace_back(t, L.topology(),
                     std::vector<Duration>(first, first + static_cast<std::ptrdiff_t>(L.cells(t))));
  }
  return out;
}

inline std::vector<Duration> from_tensors(const Layout& L,
                                          const std::vector<OpDurationTensor>& tensors) {
  std::vector<Duration> per_node(L.size());
  for (const OpDurationTensor& t : tensors) {
    if (t.size() != L.cells(t.op_type()) || t.topology() != L.topology())
      throw Error(Errc::IncompleteCoverage,
                  std::string(op_name(t.op_type())) + " tensor does not match the graph");
    std::copy(t.values().begin(), t.values().end(),
              per_node.begin() + static_cast<std::ptrdiff_t>(L.offset(t.op_type())));
  }
  return per_node;
}

/// Transfer-duration tensors for the communication op types.
inline std::map<OpType, OpDurationTensor> transfer_durations(const Trace& trace,
                                                             const DepGraph& graph) {
  const NodeDurations nd = node_durations(trace, graph);
  std::map<OpType, OpDurationTensor> out;
  for (OpDurationTensor& t : to_tensors(graph.layout(), nd.values))
    if (is_comm(t.op_type())) out.emplace(t.op_type(), std::move(t));
  return out;
}

/// Value that every fixed cell is set to: arithmetic mean for compute types,
/// lower median for communication types. Computed over all cells.
inline Duration ideal_value(OpType op, std::span<const Duration> values) {
  if (values.empty()) return 0;
  if (is_compute(op))
    return std::accumulate(values.begin(), values.end(), Duration{0}) /
           static_cast<Duration>(values.size());
  std::vector<Duration> sorted(values.begin(), values.end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  return *mid;
}

inline OpDurationTensor idealize(const OpDurationTensor& tensor,
                                 const std::function<bool(const OpKey&)>& keep) {
  const Duration ideal = ideal_value(tensor.op_type(), tensor.values());
  std::vector<Duration> values(tensor.values());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!keep(tensor.key(i))) values[i] = ideal;
  return OpDurationTensor(tensor.op_type(), tensor.topology(), std::move(values));
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct Schedule {
  std::vector<Duration> start;  // per node: launch time
  std::vector<Duration> end;
  std::vector<Duration> step_durations;
  Duration jct = 0;
};

namespace detail {

inline Schedule simulate_impl(const DepGraph& graph, std::span<const Duration> durations,
                              std::span<const Duration> launch_delay) {
  const std::size_t n = graph.num_nodes();
  if (durations.size() != n)
    throw Error(Errc::IncompleteCoverage, "need one duration per node (" + std::to_string(n) +
                                              "), got " + std::to_string(durations.size()));
  Schedule s;
  s.start.assign(n, 0);
  s.end.assign(n, 0);
  auto launch_of = [&](std::size_t v) {
    Duration t = 0;
    for (std::size_t u : graph.preds(v)) t = std::max(t, s.end[u]);
    if (!launch_delay.empty()) t += launch_delay[v];
    return t;
  };
  for (const std::vector<std::size_t>& unit : graph.eval_order()) {
    if (graph.group_of(unit.front()) == DepGraph::kNoGroup) {
      const std::size_t v = unit.front();
      s.start[v] = launch_of(v);
      s.end[v] = s.start[v] + durations[v];
      continue;
    }
    Duration group_launch = 0;
    for (std::size_t v : unit) {
      s.start[v] = launch_of(v);
      group_launch = std::max(group_launch, s.start[v]);
    }
    for (std::size_t v : unit) s.end[v] = group_launch + durations[v];
  }

  const int steps = graph.layout().topology().num_steps;
  std::vector<Duration> step_end(static_cast<std::size_t>(steps), 0);
  for (std::size_t v = 0; v < n; ++v) {
    Duration& e = step_end[static_cast<std::size_t>(graph.step(v))];
    e = std::max(e, s.end[v]);
  }
  s.step_durations.resize(step_end.size());
  Duration prev = 0;
  for (std::size_t i = 0; i < step_end.size(); ++i) {
    s.step_durations[i] = step_end[i] - prev;
    prev = step_end[i];
  }
  s.jct = std::accumulate(s.step_durations.begin(), s.step_durations.end(), Duration{0});
  return s;
}

}  // namespace detail

inline Schedule simulate(const DepGraph& graph, std::span<const Duration> per_node) {
  return detail::simulate_impl(graph, per_node, {});
}

inline Schedule simulate(const DepGraph& graph, const std::vector<OpDurationTensor>& tensors) {
  const std::vector<Duration> per_node = from_tensors(graph.layout(), tensors);
  return simulate(graph, per_node);
}

/// CSV debug dump: op key, start, end.
inline std::string schedule_csv(const DepGraph& graph, const Schedule& s) {
  std::vector<std::size_t> order(graph.num_nodes());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& rank = graph.canonical_rank();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  std::string out = "op,step,mb,pp,dp,start_us,end_us\n";
  for (std::size_t v : order) {
    const OpKey k = graph.key(v);
    out += std::string(op_name(k.op)) + "," + std::to_string(k.step) + "," +
           std::to_string(k.microbatch) + "," + std::to_string(k.worker.pp_rank) + "," +
           std::to_string(k.worker.dp_rank) + "," + std::to_string(s.start[v]) + "," +
           std::to_string(s.end[v]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Which tensor cells keep their traced value; every other cell is fixed to
/// its op type's idealized value.
struct Scenario {
  enum class Kind {
    Original,
    FixAll,
    FixAllExceptWorker,
    FixAllExceptOpTypes,
    FixOnlyWorkers,
    FixOnlyPpRank,
    FixOnlyDpRank,
    FixAllExceptPpRank,
    FixAllExceptDpRank,
    FixOnlyLastStage,
  };

  Kind kind = Kind::Original;
  std::vector<WorkerId> workers;
  std::vector<OpType> op_types;
  int rank = 0;
  std::string label;

  static Scenario original() { return {Kind::Original, {}, {}, 0, "original"}; }
  static Scenario fix_all() { return {Kind::FixAll, {}, {}, 0, "fix-all"}; }
  static Scenario fix_all_except_worker(WorkerId w) {
    return {Kind::FixAllExceptWorker, {w}, {}, 0, "fix-all-except-worker" + w.str()};
  }
  static Scenario fix_all_except_optypes(std::vector<OpType> types) {
    std::string label = "fix-all-except-optype(";
    for (std::size_t i = 0; i < types.size(); ++i)
      label += (i ? "+" : "") + std::string(op_name(types[i]));
    return {Kind::FixAllExceptOpTypes, {}, std::move(types), 0, label + ")"};
  }
  static Scenario fix_only_workers(std::vector<WorkerId> ws) {
    return {Kind::FixOnlyWorkers, std::move(ws), {}, 0, "fix-only-workers"};
  }
  static Scenario fix_only_pp_rank(int p) {
    return {Kind::FixOnlyPpRank, {}, {}, p, "fix-only-pp-rank(" + std::to_string(p) + ")"};
  }
  static Scenario fix_only_dp_rank(int d) {
    return {Kind::FixOnlyDpRank, {}, {}, d, "fix-only-dp-rank(" + std::to_string(d) + ")"};
  }
  static Scenario fix_all_except_pp_rank(int p) {
    return {Kind::FixAllExceptPpRank, {}, {}, p, "fix-all-except-pp-rank(" + std::to_string(p) + ")"};
  }
  static Scenario fix_all_except_dp_rank(int d) {
    return {Kind::FixAllExceptDpRank, {}, {}, d, "fix-all-except-dp-rank(" + std::to_string(d) + ")"};
  }
  static Scenario fix_only_last_stage() { return {Kind::FixOnlyLastStage, {}, {}, 0, "fix-only-last-stage"}; }

  void check(const JobTopology& topo) const {
    auto bad = [&](const std::string& what) {
      throw Error(Errc::InvalidConfig, label + ": " + what + " outside the job topology");
    };
    for (const WorkerId& w : workers)
      if (w.pp_rank < 0 || w.pp_rank >= topo.pp_degree || w.dp_rank < 0 || w.dp_rank >= topo.dp_degree)
        bad("worker " + w.str());
    if ((kind == Kind::FixOnlyPpRank || kind == Kind::FixAllExceptPpRank) &&
        (rank < 0 || rank >= topo.pp_degree))
      bad("pp rank");
    if ((kind == Kind::FixOnlyDpRank || kind == Kind::FixAllExceptDpRank) &&
        (rank < 0 || rank >= topo.dp_degree))
      bad("dp rank");
  }

  bool keeps(const OpKey& k, const JobTopology& topo) const {
    switch (kind) {
      case Kind::Original: return true;
      case Kind::FixAll: return false;
      case Kind::FixAllExceptWorker: return k.worker == workers.front();
      case Kind::FixAllExceptOpTypes:
        return std::find(op_types.begin(), op_types.end(), k.op) != op_types.end();
      case Kind::FixOnlyWorkers:
        return std::find(workers.begin(), workers.end(), k.worker) == workers.end();
      case Kind::FixOnlyPpRank: return k.worker.pp_rank != rank;
      case Kind::FixOnlyDpRank: return k.worker.dp_rank != rank;
      case Kind::FixAllExceptPpRank: return k.worker.pp_rank == rank;
      case Kind::FixAllExceptDpRank: return k.worker.dp_rank == rank;
      case Kind::FixOnlyLastStage: return k.worker.pp_rank != topo.pp_degree - 1;
    }
    return true;
  }
};

/// Reusable what-if context for one trace: traced durations, per-type ideal
/// values and the dependency graph. Safe to query from several threads.
class WhatIf {
 public:
  WhatIf(const Trace& trace, DepGraph graph) : graph_(std::move(graph)) {
    NodeDurations nd = node_durations(trace, graph_);
    original_ = std::move(nd.values);
    clamped_ = nd.clamped;
    const Layout& L = graph_.layout();
    for (OpType t : kAllOpTypes) {
      std::span<const Duration> cells(original_.data() + L.offset(t), L.cells(t));
      ideal_[index_of(t)] = ideal_value(t, cells);
    }
  }
  explicit WhatIf(const Trace& trace) : WhatIf(trace, build_graph(trace)) {}

  const DepGraph& graph() const { return graph_; }
  const JobTopology& topology() const { return graph_.layout().topology(); }
  const std::vector<Duration>& original_durations() const { return original_; }
  Duration ideal(OpType t) const { return ideal_[index_of(t)]; }
  std::size_t clamped_transfers() const { return clamped_; }

  std::vector<Duration> durations(const Scenario& sc) const {
    sc.check(topology());
    const Layout& L = graph_.layout();
    std::vector<Duration> d(original_.size());
    for (std::size_t v = 0; v < d.size(); ++v) {
      const OpKey k = L.key(v);
      d[v] = sc.keeps(k, topology()) ? original_[v] : ideal_[index_of(k.op)];
    }
    return d;
  }

  Schedule run(const Scenario& sc) const {
    ++runs_;
    const std::vector<Duration> d = durations(sc);
    return simulate(graph_, d);
  }

  /// Number of simulations executed through run().
  std::size_t runs() const { return runs_.load(); }

 private:
  DepGraph graph_;
  std::vector<Duration> original_;
  std::array<Duration, kNumOpTypes> ideal_{};
  std::size_t clamped_ = 0;
  mutable std::atomic<std::size_t> runs_{0};
};

inline Schedule run_scenario(const Trace& trace, const DepGraph& graph, const Scenario& scenario) {
  return WhatIf(trace, graph).run(scenario);
}

}  // namespace straggler
