// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixtures and independent oracles shared by the test binaries.

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "straggler/straggler.hpp"

namespace straggler::testing {

inline OpRecord rec(OpType op, int step, int mb, int pp, int dp, Timestamp start, Timestamp end) {
  return OpRecord{op, step, mb, {pp, dp}, start, end, 0};
}

/// Complete 1x1 trace: per step params-sync, forward, backward, grads-sync.
inline Trace minimal_trace(int steps = 1) {
  Trace t;
  t.topology = {1, 1, steps, 1};
  Timestamp now = 0;
  for (int s = 0; s < steps; ++s) {
    t.records.push_back(rec(OpType::ParamsSync, s, 0, 0, 0, now, now + 2));
    t.records.push_back(rec(OpType::ForwardCompute, s, 0, 0, 0, now + 2, now + 12));
    t.records.push_back(rec(OpType::BackwardCompute, s, 0, 0, 0, now + 12, now + 32));
    t.records.push_back(rec(OpType::GradsSync, s, 0, 0, 0, now + 32, now + 36));
    now += 36;
  }
  normalize(t);
  return t;
}

/// Noise-free generated trace with uniform base durations.
inline Trace uniform_trace(JobTopology topo, PipelineSchedule sched = PipelineSchedule::OneFOneB) {
  GenConfig c;
  c.topology = topo;
  c.schedule = sched;
  return generate(c).trace;
}

inline GenConfig slow_worker_config(JobTopology topo, WorkerId w, double factor, double noise,
                                    std::uint64_t seed) {
  GenConfig c;
  c.topology = topo;
  c.noise = noise;
  c.seed = seed;
  Injection in;
  in.kind = Injection::Kind::SlowWorker;
  in.worker = w;
  in.factor = factor;
  c.injections.push_back(in);
  return c;
}

/// Brute-force schedule evaluator. Applies the launch and end rules to the
/// plain edge list and comm groups in repeated sweeps over topo_order until
/// nothing changes; shares no evaluation code with the simulator.
struct OracleResult {
  std::map<OpKey, Duration> start, end;
  Duration jct = 0;
};

inline OracleResult oracle_simulate(const DepGraph& g, const std::vector<Duration>& d) {
  const std::vector<OpKey> order = topo_order(g);
  std::map<OpKey, std::vector<OpKey>> preds;
  for (auto [u, v] : g.edges()) preds[g.key(v)].push_back(g.key(u));
  std::map<OpKey, std::vector<OpKey>> peers;
  for (const CommGroup& grp : g.groups())
    for (std::size_t m : grp.members)
      for (std::size_t o : grp.members) peers[g.key(m)].push_back(g.key(o));
  std::map<OpKey, Duration> dur;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) dur[g.key(v)] = d[v];

  OracleResult r;
  for (const OpKey& k : order) r.start[k] = r.end[k] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (const OpKey& k : order) {
      Duration launch = 0;
      for (const OpKey& p : preds[k]) launch = std::max(launch, r.end[p]);
      Duration finish = launch + dur[k];
      if (auto it = peers.find(k); it != peers.end()) {
        Duration latest = launch;
        for (const OpKey& p : it->second) latest = std::max(latest, p == k ? launch : r.start[p]);
        finish = latest + dur[k];
      }
      if (launch != r.start[k] || finish != r.end[k]) {
        r.start[k] = launch;
        r.end[k] = finish;
        changed = true;
      }
    }
  }
  std::vector<Duration> step_end(static_cast<std::size_t>(g.layout().topology().num_steps), 0);
  for (const auto& [k, e] : r.end) step_end[static_cast<std::size_t>(k.step)] =
      std::max(step_end[static_cast<std::size_t>(k.step)], e);
  Duration prev = 0;
  for (Duration e : step_end) {
    r.jct += e - prev;
    prev = e;
  }
  return r;
}

/// Random topology with at most `max_nodes` dense cells.
inline JobTopology random_topology(std::mt19937_64& rng, int max_dp, int max_pp, int max_steps, int max_mb,
                                   std::size_t max_nodes = static_cast<std::size_t>(-1)) {
  for (;;) {
    auto pick = [&](int hi) { return std::uniform_int_distribution<int>(1, hi)(rng); };
    JobTopology t{pick(max_dp), pick(max_pp), pick(max_steps), pick(max_mb)};
    if (Layout(t).size() <= max_nodes) return t;
  }
}

}  // namespace straggler::testing
