// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "straggler/error.hpp"
#include "straggler/trace.hpp"

namespace straggler {

struct StreamId {
  WorkerId worker;
  StreamKind kind = StreamKind::Compute;
  friend bool operator==(const StreamId&, const StreamId&) = default;
};

struct CommGroup {
  enum class Kind : std::uint8_t { Collective, P2P };
  Kind kind = Kind::Collective;
  std::vector<std::size_t> members;  // node ids
};

struct Stream {
  StreamId id;
  std::vector<std::size_t> nodes;  // in launch (seq) order
};

/// Operation dependency DAG: plain edges (same-stream, DP sync <-> compute,
/// PP comm <-> compute) plus collective / P2P groups whose semantics are
/// applied by the simulator rather than encoded as edges.
class DepGraph {
 public:
  static constexpr std::size_t kNoGroup = static_cast<std::size_t>(-1);

  const Layout& layout() const { return layout_; }
  std::size_t num_nodes() const { return layout_.size(); }
  OpKey key(std::size_t node) const { return layout_.key(node); }
  int step(std::size_t node) const { return step_of_[node]; }
  std::size_t node(const OpKey& k) const { return layout_.id(k); }

  std::span<const std::size_t> preds(std::size_t node) const {
    return {pred_list_.data() + pred_off_[node], pred_off_[node + 1] - pred_off_[node]};
  }
  std::size_t num_edges() const { return pred_list_.size(); }
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(pred_list_.size());
    for (std::size_t v = 0; v < num_nodes(); ++v)
      for (std::size_t u : preds(v)) out.emplace_back(u, v);
    return out;
  }

  const std::vector<CommGroup>& groups() const { return groups_; }
  std::size_t group_of(std::size_t node) const { return group_of_[node]; }
  const std::vector<Stream>& streams() const { return streams_; }

  /// Evaluation units (a compute node, or every member of one comm group) in
  /// dependency order; ties resolved by canonical key order.
  const std::vector<std::vector<std::size_t>>& eval_order() const { return eval_order_; }

  /// Position of each node in canonical OpKey order.
  const std::vector<std::size_t>& canonical_rank() const { return canon_rank_; }

 private:
  friend DepGraph build_graph(const Trace& trace);

  Layout layout_;
  std::vector<std::size_t> pred_off_;
  std::vector<std::size_t> pred_list_;
  std::vector<CommGroup> groups_;
  std::vector<std::size_t> group_of_;
  std::vector<Stream> streams_;
  std::vector<std::vector<std::size_t>> eval_order_;
  std::vector<std::size_t> canon_rank_;
  std::vector<int> step_of_;
};

namespace detail {

inline std::vector<std::size_t> canonical_ranks(const Layout& layout) {
  std::vector<std::size_t> order(layout.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<OpKey> keys(layout.size());
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = layout.key(i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<std::size_t> rank(layout.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
  return rank;
}

}  // namespace detail

inline DepGraph build_graph(const Trace& trace) {
  const JobTopology& topo = trace.topology;
  if (auto violations = validate(trace); !violations.empty()) {
    if (topo.valid()) {
      const Layout layout(topo);
      const std::vector<std::size_t> pos = index_records(trace, layout);
      for (std::size_t id = 0; id < pos.size(); ++id)
        if (pos[id] == static_cast<std::size_t>(-1) && is_comm(layout.type_of(id)))
          throw Error(Errc::MissingPeer,
                      layout.key(id).str() + " is missing from its collective / P2P pair");
    }
    const std::string what = violations.front().key + ": " + violations.front().message;
    throw Error(Errc::ValidationFailed, what, std::nullopt, std::move(violations));
  }

  DepGraph g;
  g.layout_ = Layout(topo);
  const Layout& L = g.layout_;
  const std::size_t n = L.size();
  const std::vector<std::size_t> pos = index_records(trace, L);
  const int P = topo.pp_degree, D = topo.dp_degree, S = topo.num_steps, M = topo.microbatches_per_step;

  // Streams, ordered by seq.
  const std::size_t per_worker = kNumStreamKinds;
  std::vector<Stream> streams(static_cast<std::size_t>(P) * D * per_worker);
  for (int p = 0; p < P; ++p)
    for (int d = 0; d < D; ++d)
      for (std::size_t k = 0; k < per_worker; ++k)
        streams[(static_cast<std::size_t>(p) * D + d) * per_worker + k].id =
            StreamId{{p, d}, static_cast<StreamKind>(k)};
  for (std::size_t id = 0; id < n; ++id) {
    const OpKey k = L.key(id);
    const std::size_t s =
        (static_cast<std::size_t>(k.worker.pp_rank) * D + k.worker.dp_rank) * per_worker +
        static_cast<std::size_t>(stream_of(k.op));
    streams[s].nodes.push_back(id);
  }
  for (Stream& s : streams)
    std::sort(s.nodes.begin(), s.nodes.end(), [&](std::size_t a, std::size_t b) {
      return trace.records[pos[a]].seq < trace.records[pos[b]].seq;
    });
  std::erase_if(streams, [](const Stream& s) { return s.nodes.empty(); });

  std::vector<std::vector<std::size_t>> preds(n);
  for (const Stream& s : streams)
    for (std::size_t i = 1; i < s.nodes.size(); ++i) preds[s.nodes[i]].push_back(s.nodes[i - 1]);

  auto id_of = [&](OpType t, int step, int mb, int p, int d) {
    return L.id(OpKey{t, step, mb, {p, d}});
  };

  // DP sync <-> compute: first forward / last backward of the step, by seq.
  for (const Stream& s : streams) {
    if (s.id.kind != StreamKind::Compute) continue;
    const int p = s.id.worker.pp_rank, d = s.id.worker.dp_rank;
    std::vector<std::size_t> first_fwd(S, n), last_bwd(S, n);
    for (std::size_t node : s.nodes) {
      const OpKey k = L.key(node);
      if (k.op == OpType::ForwardCompute && first_fwd[k.step] == n) first_fwd[k.step] = node;
      if (k.op == OpType::BackwardCompute) last_bwd[k.step] = node;
    }
    for (int step = 0; step < S; ++step) {
      preds[first_fwd[step]].push_back(id_of(OpType::ParamsSync, step, 0, p, d));
      preds[id_of(OpType::GradsSync, step, 0, p, d)].push_back(last_bwd[step]);
    }
  }

  // PP comm <-> compute on the same worker.
  for (int step = 0; step < S; ++step)
    for (int mb = 0; mb < M; ++mb)
      for (int p = 0; p < P; ++p)
        for (int d = 0; d < D; ++d) {
          const std::size_t fwd = id_of(OpType::ForwardCompute, step, mb, p, d);
          const std::size_t bwd = id_of(OpType::BackwardCompute, step, mb, p, d);
          if (p > 0) {
            preds[fwd].push_back(id_of(OpType::ForwardRecv, step, mb, p, d));
            preds[id_of(OpType::BackwardSend, step, mb, p, d)].push_back(bwd);
          }
          if (p < P - 1) {
            preds[bwd].push_back(id_of(OpType::BackwardRecv, step, mb, p, d));
            preds[id_of(OpType::ForwardSend, step, mb, p, d)].push_back(fwd);
          }
        }

  // Communication groups.
  g.group_of_.assign(n, DepGraph::kNoGroup);
  auto add_group = [&](CommGroup::Kind kind, std::vector<std::size_t> members) {
    for (std::size_t m : members) g.group_of_[m] = g.groups_.size();
    g.groups_.push_back(CommGroup{kind, std::move(members)});
  };
  for (int step = 0; step < S; ++step)
    for (int p = 0; p < P; ++p)
      for (OpType t : {OpType::ParamsSync, OpType::GradsSync}) {
        std::vector<std::size_t> members;
        for (int d = 0; d < D; ++d) members.push_back(id_of(t, step, 0, p, d));
        add_group(CommGroup::Kind::Collective, std::move(members));
      }
  for (int step = 0; step < S; ++step)
    for (int mb = 0; mb < M; ++mb)
      for (int p = 0; p + 1 < P; ++p)
        for (int d = 0; d < D; ++d) {
          add_group(CommGroup::Kind::P2P, {id_of(OpType::ForwardSend, step, mb, p, d),
                                           id_of(OpType::ForwardRecv, step, mb, p + 1, d)});
          add_group(CommGroup::Kind::P2P, {id_of(OpType::BackwardSend, step, mb, p + 1, d),
                                           id_of(OpType::BackwardRecv, step, mb, p, d)});
        }

  g.pred_off_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) g.pred_off_[v + 1] = g.pred_off_[v] + preds[v].size();
  g.pred_list_.reserve(g.pred_off_[n]);
  for (auto& ps : preds) g.pred_list_.insert(g.pred_list_.end(), ps.begin(), ps.end());
  g.streams_ = std::move(streams);
  g.canon_rank_ = detail::canonical_ranks(L);
  g.step_of_.resize(n);
  for (std::size_t v = 0; v < n; ++v) g.step_of_[v] = L.key(v).step;

  // Condense each group into one unit and order units Kahn-style.
  std::vector<std::size_t> unit_of(n);
  std::vector<std::vector<std::size_t>> unit_members;
  std::vector<std::size_t> unit_rank;
  for (std::size_t v = 0; v < n; ++v) {
    if (g.group_of_[v] != DepGraph::kNoGroup) continue;
    unit_of[v] = unit_members.size();
    unit_members.push_back({v});
    unit_rank.push_back(g.canon_rank_[v]);
  }
  for (const CommGroup& grp : g.groups_) {
    std::size_t r = n;
    for (std::size_t m : grp.members) {
      unit_of[m] = unit_members.size();
      r = std::min(r, g.canon_rank_[m]);
    }
    unit_members.push_back(grp.members);
    unit_rank.push_back(r);
  }
  const std::size_t units = unit_members.size();
  std::vector<std::vector<std::size_t>> unit_succ(units);
  std::vector<std::size_t> indeg(units, 0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u : preds[v]) {
      unit_succ[unit_of[u]].push_back(unit_of[v]);
      ++indeg[unit_of[v]];
    }
  using Item = std::pair<std::size_t, std::size_t>;  // (rank, unit)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t u = 0; u < units; ++u)
    if (indeg[u] == 0) ready.emplace(unit_rank[u], u);
  g.eval_order_.reserve(units);
  while (!ready.empty()) {
    const std::size_t u = ready.top().second;
    ready.pop();
    g.eval_order_.push_back(unit_members[u]);
    for (std::size_t w : unit_succ[u])
      if (--indeg[w] == 0) ready.emplace(unit_rank[w], w);
  }
  if (g.eval_order_.size() != units) {
    std::size_t stuck = 0;
    while (stuck < units && indeg[stuck] == 0) ++stuck;
    throw Error(Errc::CycleDetected,
                "dependency cycle through " + L.key(unit_members[stuck].front()).str());
  }
  return g;
}

/// Deterministic topological order over the plain edges (group semantics not
/// included), ties broken by canonical key order.
inline std::vector<OpKey> topo_order(const DepGraph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u : g.preds(v)) {
      succ[u].push_back(v);
      ++indeg[v];
    }
  const auto& rank = g.canonical_rank();
  using Item = std::pair<std::size_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.emplace(rank[v], v);
  std::vector<OpKey> out;
  out.reserve(n);
  while (!ready.empty()) {
    const std::size_t v = ready.top().second;
    ready.pop();
    out.push_back(g.key(v));
    for (std::size_t w : succ[v])
      if (--indeg[w] == 0) ready.emplace(rank[w], w);
  }
  if (out.size() != n) throw Error(Errc::CycleDetected, "plain dependency edges contain a cycle");
  return out;
}

/// Graphviz rendering: one cluster per worker, dashed edges between members of
/// a communication group.
inline std::string to_dot(const DepGraph& g) {
  auto label = [&](std::size_t v) { return "\"" + g.key(v).str() + "\""; };
  std::string out = "digraph deps {\n  rankdir=LR;\n  node [shape=box,fontsize=9];\n";
  int cluster = 0;
  for (const Stream& s : g.streams()) {
    out += "  subgraph cluster_" + std::to_string(cluster++) + " {\n    label=\"worker " +
           s.id.worker.str() + " " + std::string(stream_name(s.id.kind)) + "\";\n";
    for (std::size_t v : s.nodes) out += "    " + label(v) + ";\n";
    out += "  }\n";
  }
  for (auto [u, v] : g.edges()) out += "  " + label(u) + " -> " + label(v) + ";\n";
  for (const CommGroup& grp : g.groups())
    for (std::size_t i = 1; i < grp.members.size(); ++i)
      out += "  " + label(grp.members[0]) + " -> " + label(grp.members[i]) +
             " [dir=none,style=dashed,color=gray];\n";
  out += "}\n";
  return out;
}

}  // namespace straggler
