// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "straggler/error.hpp"
#include "straggler/metrics.hpp"
#include "straggler/parallel.hpp"
#include "straggler/trace.hpp"
#include "straggler/whatif.hpp"

namespace straggler {

struct Thresholds {
  double straggling = 1.1;    // S at or above which a job counts as straggling
  double top_fraction = 0.03; // share of workers in the suspect set W
  double machine_issue = 0.5; // M_W strictly above
  double stage_imbalance = 0.5;  // M_S at or above
  double seqlen_correlation = 0.9;  // forward-backward Pearson r at or above
};

enum class Label { MachineIssue, StageImbalance, SeqlenImbalance, Unclassified };

inline const char* label_name(Label l) {
  switch (l) {
    case Label::MachineIssue: return "machine-issue";
    case Label::StageImbalance: return "stage-imbalance";
    case Label::SeqlenImbalance: return "seqlen-imbalance";
    case Label::Unclassified: return "unclassified";
  }
  return "unclassified";
}

inline std::optional<Label> parse_label(const std::string& s) {
  for (Label l : {Label::MachineIssue, Label::StageImbalance, Label::SeqlenImbalance,
                  Label::Unclassified})
    if (s == label_name(l)) return l;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Worker slowdowns
// ---------------------------------------------------------------------------

/// Results of the DP + PP rank sweep. The per-rank schedules are kept so the
/// per-step heatmaps can reuse them.
struct RankSweep {
  std::vector<Schedule> pp;  // fix-all-except-pp-rank(p)
  std::vector<Schedule> dp;  // fix-all-except-dp-rank(d)
  std::map<WorkerId, double> worker_slowdown;
  std::size_t simulations = 0;
};

inline RankSweep rank_sweep(const WhatIf& wi, Duration T_ideal, unsigned jobs = default_jobs()) {
  const JobTopology& topo = wi.topology();
  const std::size_t P = static_cast<std::size_t>(topo.pp_degree);
  const std::size_t D = static_cast<std::size_t>(topo.dp_degree);
  const std::size_t before = wi.runs();
  std::vector<Schedule> all = parallel_map(P + D, jobs, [&](std::size_t i) {
    return i < P ? wi.run(Scenario::fix_all_except_pp_rank(static_cast<int>(i)))
                 : wi.run(Scenario::fix_all_except_dp_rank(static_cast<int>(i - P)));
  });
  RankSweep out;
  out.simulations = wi.runs() - before;
  out.pp.assign(std::make_move_iterator(all.begin()),
                std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(P)));
  out.dp.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(P)),
                std::make_move_iterator(all.end()));
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t d = 0; d < D; ++d)
      out.worker_slowdown[WorkerId{static_cast<int>(p), static_cast<int>(d)}] =
          std::min(slowdown(out.pp[p].jct, T_ideal), slowdown(out.dp[d].jct, T_ideal));
  return out;
}

/// Approximate S_w: each worker gets the smaller of its PP-rank and DP-rank
/// slowdowns, using DP + PP simulations instead of DP x PP.
inline std::map<WorkerId, double> approx_worker_slowdowns(const WhatIf& wi, Duration T_ideal,
                                                          unsigned jobs = default_jobs()) {
  return rank_sweep(wi, T_ideal, jobs).worker_slowdown;
}

inline std::map<WorkerId, double> approx_worker_slowdowns(const Trace& trace, const DepGraph& graph) {
  const WhatIf wi(trace, graph);
  return approx_worker_slowdowns(wi, wi.run(Scenario::fix_all()).jct);
}

/// Exact S_w = T_ideal^{-w} / T_ideal with one simulation per worker.
inline std::map<WorkerId, double> exact_worker_slowdowns(const WhatIf& wi, Duration T_ideal,
                                                         unsigned jobs = default_jobs()) {
  const JobTopology& topo = wi.topology();
  const std::size_t W = static_cast<std::size_t>(topo.num_workers());
  auto worker = [&](std::size_t i) {
    return WorkerId{static_cast<int>(i) / topo.dp_degree, static_cast<int>(i) % topo.dp_degree};
  };
  const std::vector<double> s = parallel_map(W, jobs, [&](std::size_t i) {
    return slowdown(wi.run(Scenario::fix_all_except_worker(worker(i))).jct, T_ideal);
  });
  std::map<WorkerId, double> out;
  for (std::size_t i = 0; i < W; ++i) out[worker(i)] = s[i];
  return out;
}

/// The ceil(fraction * workers) slowest workers; ties go to the lower
/// (pp, dp) coordinate.
inline std::vector<WorkerId> top_workers(const std::map<WorkerId, double>& slowdowns,
                                         double fraction = 0.03) {
  std::vector<std::pair<WorkerId, double>> v(slowdowns.begin(), slowdowns.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t k = std::min(
      v.size(), static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size()) - 1e-9)));
  std::vector<WorkerId> out;
  for (std::size_t i = 0; i < std::max<std::size_t>(k, v.empty() ? 0 : 1); ++i) out.push_back(v[i].first);
  std::sort(out.begin(), out.end());
  return out;
}

/// M_W: share of the slowdown recovered by fixing only the suspect workers.
inline double machine_issue_score(const WhatIf& wi, const std::vector<WorkerId>& suspects,
                                  Duration T, Duration T_ideal) {
  if (!(T > T_ideal)) throw Error(Errc::NotStraggling, "job does not straggle");
  return attribution(T, wi.run(Scenario::fix_only_workers(suspects)).jct, T_ideal);
}

/// M_S: share of the slowdown recovered by fixing only the last pipeline
/// stage; defined as 0 without pipeline parallelism.
inline double last_stage_score(const WhatIf& wi, Duration T, Duration T_ideal) {
  if (!(T > T_ideal)) throw Error(Errc::NotStraggling, "job does not straggle");
  if (wi.topology().pp_degree < 2) return 0.0;
  return attribution(T, wi.run(Scenario::fix_only_last_stage()).jct, T_ideal);
}

// ---------------------------------------------------------------------------
// Forward-backward correlation
// ---------------------------------------------------------------------------

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// The stage probed for forward-backward correlation: the second stage when
/// there are at least three, else the first (avoids embedding / loss layers).
inline int probe_stage(const JobTopology& topo) { return topo.pp_degree >= 3 ? 1 : 0; }

/// Pearson r between forward and backward compute durations of every
/// microbatch on the probe stage; nullopt when either series is constant.
inline std::optional<double> fb_correlation(const Trace& trace) {
  const int stage = probe_stage(trace.topology);
  std::map<OpKey, Duration> fwd;
  std::vector<const OpRecord*> bwd;
  for (const OpRecord& r : trace.records) {
    if (r.worker.pp_rank != stage) continue;
    if (r.op == OpType::ForwardCompute) fwd[r.key()] = r.duration();
    if (r.op == OpType::BackwardCompute) bwd.push_back(&r);
  }
  std::vector<double> x, y;
  for (const OpRecord* b : bwd) {
    OpKey k = b->key();
    k.op = OpType::ForwardCompute;
    if (auto it = fwd.find(k); it != fwd.end()) {
      x.push_back(it->second);
      y.push_back(b->duration());
    }
  }
  if (x.size() < 2)
    throw Error(Errc::InsufficientSamples,
                "need >= 2 forward/backward pairs on stage " + std::to_string(stage));
  return pearson(x, y);
}

// ---------------------------------------------------------------------------
// Report and classification
// ---------------------------------------------------------------------------

struct RootCauseReport {
  std::map<WorkerId, double> worker_slowdowns;
  std::vector<WorkerId> top_worker_set;
  double m_w = 0;
  double m_s = 0;
  std::optional<double> fb_correlation;
  std::set<Label> labels;
};

inline std::set<Label> classify(const MetricsReport& metrics, const RootCauseReport& rc,
                                const Thresholds& th = {}) {
  (void)metrics;
  std::set<Label> out;
  if (rc.m_w > th.machine_issue) out.insert(Label::MachineIssue);
  if (rc.m_s >= th.stage_imbalance) out.insert(Label::StageImbalance);
  if (rc.fb_correlation && *rc.fb_correlation >= th.seqlen_correlation)
    out.insert(Label::SeqlenImbalance);
  if (out.empty()) out.insert(Label::Unclassified);
  return out;
}

inline nlohmann::json to_json(const RootCauseReport& rc) {
  nlohmann::json j;
  nlohmann::json ws = nlohmann::json::array();
  for (const auto& [w, s] : rc.worker_slowdowns)
    ws.push_back({{"pp", w.pp_rank}, {"dp", w.dp_rank}, {"slowdown", s}});
  j["worker_slowdowns"] = ws;
  nlohmann::json top = nlohmann::json::array();
  for (const WorkerId& w : rc.top_worker_set) top.push_back({w.pp_rank, w.dp_rank});
  j["top_worker_set"] = top;
  j["m_w"] = rc.m_w;
  j["m_w_in_range"] = attribution_in_range(rc.m_w);
  j["m_s"] = rc.m_s;
  j["m_s_in_range"] = attribution_in_range(rc.m_s);
  j["fb_correlation"] = rc.fb_correlation ? nlohmann::json(*rc.fb_correlation) : nlohmann::json(nullptr);
  nlohmann::json labels = nlohmann::json::array();
  for (Label l : rc.labels) labels.push_back(label_name(l));
  j["labels"] = labels;
  return j;
}

inline RootCauseReport rootcause_from_json(const nlohmann::json& j) {
  RootCauseReport rc;
  for (const auto& e : j.at("worker_slowdowns"))
    rc.worker_slowdowns[WorkerId{e.at("pp").get<int>(), e.at("dp").get<int>()}] =
        e.at("slowdown").get<double>();
  for (const auto& e : j.at("top_worker_set")) rc.top_worker_set.push_back({e[0].get<int>(), e[1].get<int>()});
  rc.m_w = j.at("m_w").get<double>();
  rc.m_s = j.at("m_s").get<double>();
  if (!j.at("fb_correlation").is_null()) rc.fb_correlation = j.at("fb_correlation").get<double>();
  for (const auto& l : j.at("labels"))
    if (auto lab = parse_label(l.get<std::string>())) rc.labels.insert(*lab);
  return rc;
}

}  // namespace straggler
