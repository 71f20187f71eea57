// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "straggler/error.hpp"
#include "straggler/trace.hpp"
#include "straggler/whatif.hpp"

namespace straggler {

/// Job slowdown S = T / T_ideal.
inline double slowdown(Duration T, Duration T_ideal) {
  if (T_ideal == 0) throw Error(Errc::ZeroIdeal, "ideal completion time is zero");
  return T / T_ideal;
}

/// Fraction of GPU-hours wasted, 1 - 1/S. Negative when S < 1.
inline double waste(double S) { return 1.0 - 1.0 / S; }

/// S_t = T_ideal^{-t} / T_ideal, where only type t is left unfixed.
inline double optype_slowdown(Duration T_ideal_minus_t, Duration T_ideal) {
  return slowdown(T_ideal_minus_t, T_ideal);
}

/// Op types whose slowdown is reported together: send and receive of one
/// direction form a single group.
struct OpTypeGroup {
  std::string name;
  std::vector<OpType> types;
};

inline std::vector<OpTypeGroup> optype_groups(const JobTopology& topo) {
  std::vector<OpTypeGroup> out = {
      {"forward-compute", {OpType::ForwardCompute}},
      {"backward-compute", {OpType::BackwardCompute}},
  };
  if (topo.pp_degree > 1) {
    out.push_back({"forward-send/recv", {OpType::ForwardSend, OpType::ForwardRecv}});
    out.push_back({"backward-send/recv", {OpType::BackwardSend, OpType::BackwardRecv}});
  }
  out.push_back({"params-sync", {OpType::ParamsSync}});
  out.push_back({"grads-sync", {OpType::GradsSync}});
  return out;
}

struct PerStepSlowdown {
  std::vector<double> raw;         // step duration / (T_ideal / n)
  std::vector<double> normalized;  // raw / S
};

inline PerStepSlowdown per_step_slowdown(const Schedule& original, Duration T_ideal, int n) {
  if (n < 1) throw Error(Errc::InvalidConfig, "step count must be >= 1");
  if (T_ideal == 0) throw Error(Errc::ZeroIdeal, "ideal completion time is zero");
  const double ideal_step = T_ideal / n;
  const double S = original.jct / T_ideal;
  PerStepSlowdown out;
  for (Duration d : original.step_durations) {
    out.raw.push_back(d / ideal_step);
    out.normalized.push_back(S == 0 ? 0.0 : d / ideal_step / S);
  }
  return out;
}

/// Fraction of the slowdown recovered by fixing a subset:
/// (T - T_fixed_subset) / (T - T_ideal). Not clipped to [0, 1].
inline double attribution(Duration T, Duration T_fixed_subset, Duration T_ideal) {
  if (!(T > T_ideal))
    throw Error(Errc::NotStraggling, "T (" + std::to_string(T) + ") <= T_ideal (" +
                                         std::to_string(T_ideal) + ")");
  return (T - T_fixed_subset) / (T - T_ideal);
}

inline bool attribution_in_range(double a) { return a >= 0.0 && a <= 1.0; }

struct Discrepancy {
  double value = 0;
  double tau_sim = 0;
  double tau_act = 0;
  bool discard = false;
};

inline constexpr double kDiscardDiscrepancy = 0.05;

/// Per-step spans from trace timestamps: max end of step s minus max end of
/// step s-1, with step 0 measured from the earliest start in the trace.
inline std::vector<Duration> traced_step_durations(const Trace& trace) {
  const int n = trace.topology.num_steps;
  std::vector<Timestamp> step_end(static_cast<std::size_t>(n), 0);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  Timestamp origin = 0;
  bool any = false;
  for (const OpRecord& r : trace.records) {
    if (r.step < 0 || r.step >= n) continue;
    origin = any ? std::min(origin, r.start) : r.start;
    any = true;
    auto& e = step_end[static_cast<std::size_t>(r.step)];
    e = seen[static_cast<std::size_t>(r.step)] ? std::max(e, r.end) : r.end;
    seen[static_cast<std::size_t>(r.step)] = 1;
  }
  std::vector<Duration> out;
  Timestamp prev = origin;
  for (Timestamp e : step_end) {
    out.push_back(static_cast<Duration>(e - prev));
    prev = e;
  }
  return out;
}

inline Discrepancy discrepancy(const Schedule& original, const Trace& trace) {
  const int n = trace.topology.num_steps;
  const std::vector<Duration> act = traced_step_durations(trace);
  Discrepancy d;
  d.tau_sim = original.jct / n;
  double total = 0;
  for (Duration x : act) total += x;
  d.tau_act = total / n;
  d.value = d.tau_act == 0 ? (d.tau_sim == 0 ? 0.0 : 1.0) : std::abs(d.tau_sim - d.tau_act) / d.tau_act;
  d.discard = d.value > kDiscardDiscrepancy;
  return d;
}

struct MetricsReport {
  Duration T = 0;
  Duration T_ideal = 0;
  double S = 1;
  double waste = 0;
  std::map<std::string, double> S_t;
  std::map<WorkerId, double> S_w;
  bool S_w_approximate = true;
  std::optional<double> M_W;
  std::optional<double> M_S;
  PerStepSlowdown per_step;
  Discrepancy discrepancy;
  bool straggling = false;
};

inline nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["T_us"] = m.T;
  j["T_ideal_us"] = m.T_ideal;
  j["S"] = m.S;
  j["waste"] = m.waste;
  j["straggling"] = m.straggling;
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [name, s] : m.S_t) st[name] = {{"S_t", s}, {"waste", waste(s)}};
  j["S_t"] = st;
  nlohmann::json sw = nlohmann::json::array();
  for (const auto& [w, s] : m.S_w) sw.push_back({{"pp", w.pp_rank}, {"dp", w.dp_rank}, {"S_w", s}});
  j["S_w"] = sw;
  j["S_w_approximate"] = m.S_w_approximate;
  j["M_W"] = m.M_W ? nlohmann::json(*m.M_W) : nlohmann::json(nullptr);
  j["M_S"] = m.M_S ? nlohmann::json(*m.M_S) : nlohmann::json(nullptr);
  j["per_step_slowdown"] = m.per_step.raw;
  j["normalized_step_slowdown"] = m.per_step.normalized;
  j["discrepancy"] = {{"value", m.discrepancy.value},
                      {"tau_sim_us", m.discrepancy.tau_sim},
                      {"tau_act_us", m.discrepancy.tau_act}};
  j["discarded"] = m.discrepancy.discard;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport m;
  m.T = j.at("T_us").get<double>();
  m.T_ideal = j.at("T_ideal_us").get<double>();
  m.S = j.at("S").get<double>();
  m.waste = j.at("waste").get<double>();
  m.straggling = j.at("straggling").get<bool>();
  for (const auto& [name, v] : j.at("S_t").items()) m.S_t[name] = v.at("S_t").get<double>();
  for (const auto& e : j.at("S_w"))
    m.S_w[WorkerId{e.at("pp").get<int>(), e.at("dp").get<int>()}] = e.at("S_w").get<double>();
  m.S_w_approximate = j.value("S_w_approximate", true);
  if (!j.at("M_W").is_null()) m.M_W = j.at("M_W").get<double>();
  if (!j.at("M_S").is_null()) m.M_S = j.at("M_S").get<double>();
  m.per_step.raw = j.at("per_step_slowdown").get<std::vector<double>>();
  m.per_step.normalized = j.at("normalized_step_slowdown").get<std::vector<double>>();
  m.discrepancy.value = j.at("discrepancy").at("value").get<double>();
  m.discrepancy.tau_sim = j.at("discrepancy").at("tau_sim_us").get<double>();
  m.discrepancy.tau_act = j.at("discrepancy").at("tau_act_us").get<double>();
  m.discrepancy.discard = j.at("discarded").get<bool>();
  return m;
}

}  // namespace straggler
