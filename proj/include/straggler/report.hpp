// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "straggler/dep_graph.hpp"
#include "straggler/error.hpp"
#include "straggler/metrics.hpp"
#include "straggler/parallel.hpp"
#include "straggler/rootcause.hpp"
#include "straggler/trace.hpp"
#include "straggler/whatif.hpp"

namespace straggler {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

/// Worker slowdown grid: row = PP rank, column = DP rank.
struct Heatmap {
  std::vector<std::vector<double>> grid;
  int step = -1;  // -1 for the whole-job map
  double lo = 1.0;
  double hi = 1.0;

  static Heatmap from_grid(std::vector<std::vector<double>> grid, int step = -1) {
    Heatmap h;
    h.grid = std::move(grid);
    h.step = step;
    for (const auto& row : h.grid)
      for (double v : row) h.hi = std::max(h.hi, v);
    return h;
  }
};

inline Heatmap heatmap_from_slowdowns(const std::map<WorkerId, double>& s, const JobTopology& topo) {
  std::vector<std::vector<double>> grid(static_cast<std::size_t>(topo.pp_degree),
                                        std::vector<double>(static_cast<std::size_t>(topo.dp_degree), 0.0));
  for (const auto& [w, v] : s)
    grid[static_cast<std::size_t>(w.pp_rank)][static_cast<std::size_t>(w.dp_rank)] = v;
  return Heatmap::from_grid(std::move(grid));
}

/// One grid per step: per-step durations of the rank sweep over the per-step
/// durations of the fully fixed timeline.
inline std::vector<Heatmap> per_step_heatmaps(const RankSweep& sweep, const Schedule& ideal,
                                              const JobTopology& topo) {
  std::vector<Heatmap> out;
  for (int s = 0; s < topo.num_steps; ++s) {
    const auto step = static_cast<std::size_t>(s);
    const double base = ideal.step_durations[step];
    std::vector<std::vector<double>> grid(static_cast<std::size_t>(topo.pp_degree));
    for (std::size_t p = 0; p < grid.size(); ++p)
      for (std::size_t d = 0; d < static_cast<std::size_t>(topo.dp_degree); ++d) {
        const double t = std::min(sweep.pp[p].step_durations[step], sweep.dp[d].step_durations[step]);
        grid[p].push_back(base == 0 ? 0.0 : t / base);
      }
    out.push_back(Heatmap::from_grid(std::move(grid), s));
  }
  return out;
}

inline std::vector<Heatmap> per_step_heatmaps(const Trace& trace, const DepGraph& graph,
                                              const Thresholds& th = {}) {
  const WhatIf wi(trace, graph);
  const Schedule original = wi.run(Scenario::original());
  const Schedule ideal = wi.run(Scenario::fix_all());
  if (!(ideal.jct > 0) || original.jct / ideal.jct < th.straggling)
    throw Error(Errc::NotStraggling, "per-step heatmaps need a straggling job");
  return per_step_heatmaps(rank_sweep(wi, ideal.jct), ideal, trace.topology);
}

namespace detail {

inline std::string fmt_num(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Linear ramp from a near-white to a dark red-brown.
inline std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int lo[3] = {0xff, 0xf5, 0xeb};
  const int hi[3] = {0x7f, 0x27, 0x04};
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(lo[0] + (hi[0] - lo[0]) * t + 0.5),
                static_cast<int>(lo[1] + (hi[1] - lo[1]) * t + 0.5),
                static_cast<int>(lo[2] + (hi[2] - lo[2]) * t + 0.5));
  return buf;
}

}  // namespace detail

/// Shade of one cell on the heatmap's linear scale, in [0, 1].
inline double heat_level(const Heatmap& h, double v) {
  if (h.hi <= h.lo) return 0.0;
  return std::clamp((v - h.lo) / (h.hi - h.lo), 0.0, 1.0);
}

inline std::string render_heatmap(const Heatmap& h) {
  if (h.grid.empty() || h.grid.front().empty()) throw Error(Errc::EmptyGrid, "heatmap has no cells");
  constexpr int cell = 28, left = 56, top = 40;
  const int rows = static_cast<int>(h.grid.size());
  const int cols = static_cast<int>(h.grid.front().size());
  const int width = left + cols * cell + 16, height = top + rows * cell + 40;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                    "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  const std::string title =
      h.step < 0 ? "worker slowdown" : "worker slowdown, step " + std::to_string(h.step);
  out += "  <text x=\"" + std::to_string(left) + "\" y=\"16\">" + title + " (scale " +
         detail::fmt_num(h.lo, "%.2f") + " .. " + detail::fmt_num(h.hi, "%.2f") + ")</text>\n";
  out += "  <text x=\"" + std::to_string(left) + "\" y=\"32\">DP rank &#8594;</text>\n";
  out += "  <text x=\"4\" y=\"" + std::to_string(top + 12) + "\">PP rank</text>\n";
  for (int p = 0; p < rows; ++p) {
    out += "  <text x=\"" + std::to_string(left - 18) + "\" y=\"" + std::to_string(top + p * cell + 18) +
           "\">" + std::to_string(p) + "</text>\n";
    for (int d = 0; d < cols; ++d) {
      const double v = h.grid[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)];
      out += "  <rect x=\"" + std::to_string(left + d * cell) + "\" y=\"" + std::to_string(top + p * cell) +
             "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
             detail::heat_color(heat_level(h, v)) + "\" stroke=\"#999\"><title>pp=" + std::to_string(p) +
             " dp=" + std::to_string(d) + " slowdown=" + detail::fmt_num(v) + "</title></rect>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

inline nlohmann::json to_json(const Heatmap& h) {
  return {{"step", h.step}, {"min", h.lo}, {"max", h.hi}, {"grid", h.grid}};
}

inline Heatmap heatmap_from_json(const nlohmann::json& j) {
  Heatmap h = Heatmap::from_grid(j.at("grid").get<std::vector<std::vector<double>>>(), j.value("step", -1));
  h.lo = j.value("min", 1.0);
  h.hi = j.value("max", h.hi);
  return h;
}

// ---------------------------------------------------------------------------
// Full analysis
// ---------------------------------------------------------------------------

struct AnalysisOptions {
  Thresholds thresholds;
  unsigned jobs = default_jobs();
  bool exact_worker_slowdowns = false;
};

struct Analysis {
  JobTopology topology;
  nlohmann::json job_meta = nlohmann::json::object();
  MetricsReport metrics;
  std::optional<RootCauseReport> rootcause;
  std::optional<Heatmap> heatmap;
  std::vector<Heatmap> per_step_heatmaps;
  std::size_t simulations = 0;
};

inline Analysis analyze(const Trace& trace, const AnalysisOptions& opt = {}) {
  const WhatIf wi(trace);
  Analysis a;
  a.topology = trace.topology;
  a.job_meta = trace.meta;

  const std::vector<OpTypeGroup> groups = optype_groups(trace.topology);
  std::vector<Scenario> scenarios = {Scenario::original(), Scenario::fix_all()};
  for (const OpTypeGroup& g : groups) scenarios.push_back(Scenario::fix_all_except_optypes(g.types));
  const std::vector<Schedule> runs =
      parallel_map(scenarios.size(), opt.jobs, [&](std::size_t i) { return wi.run(scenarios[i]); });
  const Schedule& original = runs[0];
  const Schedule& ideal = runs[1];

  MetricsReport& m = a.metrics;
  m.T = original.jct;
  m.T_ideal = ideal.jct;
  m.S = slowdown(m.T, m.T_ideal);
  m.waste = waste(m.S);
  for (std::size_t i = 0; i < groups.size(); ++i)
    m.S_t[groups[i].name] = optype_slowdown(runs[i + 2].jct, m.T_ideal);
  m.per_step = per_step_slowdown(original, m.T_ideal, trace.topology.num_steps);
  m.discrepancy = discrepancy(original, trace);
  m.straggling = m.S >= opt.thresholds.straggling;

  std::optional<double> fb;
  try {
    fb = fb_correlation(trace);
  } catch (const Error& e) {
    if (e.code() != Errc::InsufficientSamples) throw;
  }

  if (m.straggling && m.T > m.T_ideal) {
    const RankSweep sweep = rank_sweep(wi, m.T_ideal, opt.jobs);
    RootCauseReport rc;
    if (opt.exact_worker_slowdowns) {
      rc.worker_slowdowns = exact_worker_slowdowns(wi, m.T_ideal, opt.jobs);
      m.S_w_approximate = false;
    } else {
      rc.worker_slowdowns = sweep.worker_slowdown;
    }
    m.S_w = rc.worker_slowdowns;
    rc.top_worker_set = top_workers(rc.worker_slowdowns, opt.thresholds.top_fraction);
    rc.m_w = machine_issue_score(wi, rc.top_worker_set, m.T, m.T_ideal);
    rc.m_s = last_stage_score(wi, m.T, m.T_ideal);
    rc.fb_correlation = fb;
    m.M_W = rc.m_w;
    m.M_S = rc.m_s;
    rc.labels = classify(m, rc, opt.thresholds);
    a.heatmap = heatmap_from_slowdowns(rc.worker_slowdowns, trace.topology);
    a.per_step_heatmaps = per_step_heatmaps(sweep, ideal, trace.topology);
    a.rootcause = std::move(rc);
  }
  a.simulations = wi.runs();
  return a;
}

inline nlohmann::json to_json(const Analysis& a) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["job"] = a.job_meta;
  j["topology"] = {{"dp_degree", a.topology.dp_degree},
                   {"pp_degree", a.topology.pp_degree},
                   {"num_steps", a.topology.num_steps},
                   {"microbatches_per_step", a.topology.microbatches_per_step}};
  j["metrics"] = to_json(a.metrics);
  j["discarded"] = a.metrics.discrepancy.discard;
  j["rootcause"] = a.rootcause ? to_json(*a.rootcause) : nlohmann::json(nullptr);
  j["heatmap"] = a.heatmap ? to_json(*a.heatmap) : nlohmann::json(nullptr);
  nlohmann::json steps = nlohmann::json::array();
  for (const Heatmap& h : a.per_step_heatmaps) steps.push_back(to_json(h));
  j["per_step_heatmaps"] = steps;
  j["simulations"] = a.simulations;
  return j;
}

inline Analysis analysis_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kReportSchemaVersion)
    throw Error(Errc::InvalidConfig, "unsupported report schema version " + std::to_string(version));
  Analysis a;
  const auto& t = j.at("topology");
  a.topology = JobTopology{t.at("dp_degree").get<int>(), t.at("pp_degree").get<int>(),
                           t.at("num_steps").get<int>(), t.at("microbatches_per_step").get<int>()};
  a.job_meta = j.value("job", nlohmann::json::object());
  a.metrics = metrics_from_json(j.at("metrics"));
  if (!j.at("rootcause").is_null()) a.rootcause = rootcause_from_json(j.at("rootcause"));
  if (!j.at("heatmap").is_null()) a.heatmap = heatmap_from_json(j.at("heatmap"));
  for (const auto& h : j.at("per_step_heatmaps")) a.per_step_heatmaps.push_back(heatmap_from_json(h));
  a.simulations = j.value("simulations", std::size_t{0});
  return a;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Empirical CDF: sorted values with cumulative fraction i / n.
inline std::string cdf_csv(std::vector<double> values, const std::string& column) {
  std::sort(values.begin(), values.end());
  std::string out = column + ",cdf\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    out += detail::fmt_num(values[i], "%.6f") + "," +
           detail::fmt_num(static_cast<double>(i + 1) / static_cast<double>(values.size()), "%.6f") + "\n";
  return out;
}

inline std::string metrics_csv_header() {
  return "job,workers,dp_degree,pp_degree,num_steps,microbatches,T_us,T_ideal_us,S,waste,straggling,"
         "discrepancy,discarded,M_W,M_S,fb_correlation,labels\n";
}

inline std::string metrics_csv_row(const std::string& job, const Analysis& a) {
  const MetricsReport& m = a.metrics;
  auto opt = [](const std::optional<double>& v) { return v ? detail::fmt_num(*v, "%.6f") : std::string(); };
  std::string labels;
  std::optional<double> fb;
  if (a.rootcause) {
    for (Label l : a.rootcause->labels) labels += (labels.empty() ? "" : ";") + std::string(label_name(l));
    fb = a.rootcause->fb_correlation;
  }
  return job + "," + std::to_string(a.topology.num_workers()) + "," + std::to_string(a.topology.dp_degree) +
         "," + std::to_string(a.topology.pp_degree) + "," + std::to_string(a.topology.num_steps) + "," +
         std::to_string(a.topology.microbatches_per_step) + "," + detail::fmt_num(m.T, "%.1f") + "," +
         detail::fmt_num(m.T_ideal, "%.1f") + "," + detail::fmt_num(m.S, "%.6f") + "," +
         detail::fmt_num(m.waste, "%.6f") + "," + (m.straggling ? "1" : "0") + "," +
         detail::fmt_num(m.discrepancy.value, "%.6f") + "," + (m.discrepancy.discard ? "1" : "0") + "," +
         opt(m.M_W) + "," + opt(m.M_S) + "," + opt(fb) + "," + labels + "\n";
}

}  // namespace straggler
