// SPDX-License-Identifier: Apache-2.0
// straggler: command-line front end for trace generation, validation,
// what-if analysis, report rendering and batch balancing.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "straggler/straggler.hpp"

namespace fs = std::filesystem;
using namespace straggler;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

void emit(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    std::cout.flush();
  } else {
    write_file(path, data);
  }
}

void print_error(const Error& e) {
  std::cerr << "error: " << e.what() << "\n";
  for (const Violation& v : e.violations())
    std::cerr << "  " << rule_name(v.rule) << " " << v.key << (v.message.empty() ? "" : ": " + v.message) << "\n";
}

std::string truth_path_for(const std::string& trace_path) {
  std::string base = trace_path;
  for (const char* ext : {".gz", ".jsonl"})
    if (base.size() > std::strlen(ext) && base.ends_with(ext)) base.resize(base.size() - std::strlen(ext));
  return base + ".truth.json";
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string config, out, truth;
  std::optional<std::uint64_t> seed;
};

int run_generate(const GenerateArgs& a) {
  GenConfig c = config_from_json(nlohmann::json::parse(read_file(a.config)));
  if (a.seed) c.seed = *a.seed;
  const Generated g = generate(c);
  write_trace_file(a.out, g.trace);
  const std::string truth = a.truth.empty() ? truth_path_for(a.out) : a.truth;
  write_file(truth, to_json(g.truth).dump(2) + "\n");
  log().info("wrote {} records to {}, ground truth to {}", g.trace.records.size(), a.out, truth);
  return kOk;
}

// --- validate ---------------------------------------------------------------

int run_validate(const std::string& path) {
  const Trace t = read_trace_file(path);
  const DepGraph g = build_graph(t);
  std::cout << "ok: " << t.records.size() << " records, " << g.num_edges() << " edges, "
            << t.topology.dp_degree << "x" << t.topology.pp_degree << " workers, " << t.topology.num_steps
            << " steps\n";
  return kOk;
}

// --- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string trace, out, csv, schedule_csv;
  unsigned jobs = default_jobs();
  bool exact = false;
  Thresholds thresholds;
};

int run_analyze(const AnalyzeArgs& a) {
  const Trace t = read_trace_file(a.trace);
  AnalysisOptions opt;
  opt.jobs = a.jobs;
  opt.exact_worker_slowdowns = a.exact;
  opt.thresholds = a.thresholds;
  Analysis an = analyze(t, opt);
  if (an.job_meta.is_null() || !an.job_meta.contains("name"))
    an.job_meta["name"] = fs::path(a.trace).filename().string();
  emit(a.out, to_json(an).dump(2) + "\n");
  if (!a.csv.empty()) emit(a.csv, metrics_csv_header() + metrics_csv_row(an.job_meta["name"].get<std::string>(), an));
  if (!a.schedule_csv.empty()) {
    const DepGraph g = build_graph(t);
    emit(a.schedule_csv, schedule_csv(g, run_scenario(t, g, Scenario::original())));
  }
  if (an.metrics.discrepancy.discard)
    log().warn("simulated timeline differs from the trace by {:.1f}%; report marked discarded",
               100 * an.metrics.discrepancy.value);
  log().info("S = {:.4f}, {} simulations", an.metrics.S, an.simulations);
  return kOk;
}

// --- report -----------------------------------------------------------------

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

int run_report(const std::vector<std::string>& inputs, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<double> fleet_S, fleet_waste, fleet_steps, fleet_workers;
  std::string csv = metrics_csv_header();
  std::string body;
  std::set<std::string> used;

  for (const std::string& in : inputs) {
    const Analysis a = analysis_from_json(nlohmann::json::parse(read_file(in)));
    std::string stem = fs::path(in).stem().string();
    if (stem.size() > 7 && stem.ends_with(".report")) stem.resize(stem.size() - 7);
    std::string name = stem;
    for (int i = 2; used.count(name); ++i) name = stem + "-" + std::to_string(i);
    used.insert(name);
    const fs::path jd = fs::path(dir) / name;
    fs::create_directories(jd);

    const MetricsReport& m = a.metrics;
    csv += metrics_csv_row(name, a);
    if (!m.discrepancy.discard) {
      fleet_S.push_back(m.S);
      fleet_waste.push_back(m.waste);
      fleet_steps.insert(fleet_steps.end(), m.per_step.normalized.begin(), m.per_step.normalized.end());
    }
    write_file((jd / "per_step_slowdown_cdf.csv").string(), cdf_csv(m.per_step.normalized, "normalized_slowdown"));

    body += "<h2>" + html_escape(name) + "</h2>\n<p>S = " + fixed(m.S) + ", waste = " + fixed(m.waste) +
            ", discrepancy = " + fixed(m.discrepancy.value) + (m.discrepancy.discard ? " (discarded)" : "") +
            "</p>\n";
    if (a.rootcause) {
      std::string labels;
      for (Label l : a.rootcause->labels) labels += (labels.empty() ? "" : ", ") + std::string(label_name(l));
      body += "<p>M_W = " + fixed(a.rootcause->m_w) + ", M_S = " + fixed(a.rootcause->m_s) +
              ", labels: " + labels + "</p>\n";
      std::vector<double> ws;
      for (const auto& [w, s] : a.rootcause->worker_slowdowns) ws.push_back(s);
      fleet_workers.insert(fleet_workers.end(), ws.begin(), ws.end());
      write_file((jd / "worker_slowdown_cdf.csv").string(), cdf_csv(ws, "worker_slowdown"));
    }
    if (a.heatmap) {
      write_file((jd / "heatmap.svg").string(), render_heatmap(*a.heatmap));
      body += "<img src=\"" + name + "/heatmap.svg\" alt=\"worker heatmap\">\n";
    }
    if (!a.per_step_heatmaps.empty()) {
      body += "<details><summary>per-step heatmaps</summary>\n";
      for (const Heatmap& h : a.per_step_heatmaps) {
        const std::string f = "step_" + std::to_string(h.step) + ".svg";
        write_file((jd / f).string(), render_heatmap(h));
        body += "<img src=\"" + name + "/" + f + "\" alt=\"step " + std::to_string(h.step) + "\">\n";
      }
      body += "</details>\n";
    }
  }

  const fs::path d(dir);
  write_file((d / "metrics.csv").string(), csv);
  write_file((d / "slowdown_cdf.csv").string(), cdf_csv(fleet_S, "slowdown"));
  write_file((d / "waste_cdf.csv").string(), cdf_csv(fleet_waste, "waste"));
  write_file((d / "per_step_slowdown_cdf.csv").string(), cdf_csv(fleet_steps, "normalized_slowdown"));
  write_file((d / "worker_slowdown_cdf.csv").string(), cdf_csv(fleet_workers, "worker_slowdown"));

  const std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>straggler report</title></head><body>\n"
      "<h1>Straggler report</h1>\n<p>" +
      std::to_string(inputs.size()) +
      " job(s). Fleet CDFs: <a href=\"slowdown_cdf.csv\">slowdown</a>, <a href=\"waste_cdf.csv\">waste</a>, "
      "<a href=\"per_step_slowdown_cdf.csv\">per-step slowdown</a>, "
      "<a href=\"worker_slowdown_cdf.csv\">worker slowdown</a>. Per-job rows: "
      "<a href=\"metrics.csv\">metrics.csv</a>.</p>\n" +
      body + "</body></html>\n";
  write_file((d / "index.html").string(), html);
  return kOk;
}

// --- balance ----------------------------------------------------------------

int run_balance(const std::string& path, int dp, int mb, const std::string& out) {
  std::istringstream in(read_file(path));
  std::string result;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<Tokens> lengths;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        throw Error(Errc::MalformedLine, "\"" + tok + "\" is not a sequence length", lineno);
      lengths.push_back(v);
    }
    if (lengths.empty()) continue;
    try {
      result += to_json(plan_batch(lengths, dp, mb)).dump() + "\n";
    } catch (const Error& e) {
      std::cerr << "error: batch on line " << lineno << ": " << e.what() << "\n";
      return kFailed;
    }
  }
  emit(out, result);
  return kOk;
}

// --- dump-graph -------------------------------------------------------------

int run_dump_graph(const std::string& path, const std::string& out) {
  emit(out, to_dot(build_graph(read_trace_file(path))));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Straggler what-if analysis for DP x PP training traces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "straggler 0.1.0");

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Generate a synthetic trace from a JSON config");
  generate_cmd->add_option("config", gen.config, "Generator config (JSON)")->required();
  generate_cmd->add_option("-o,--output", gen.out, "Output trace (.jsonl or .jsonl.gz)")->required();
  generate_cmd->add_option("--truth", gen.truth, "Ground-truth sidecar (default: <trace>.truth.json)");
  generate_cmd->add_option("--seed", gen.seed, "Override the config seed");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a trace for completeness and consistency");
  validate_cmd->add_option("trace", validate_path, "Trace file")->required();

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Run the what-if analysis on a trace");
  analyze_cmd->add_option("trace", an.trace, "Trace file")->required();
  analyze_cmd->add_option("-o,--output", an.out, "Report JSON (default: stdout)");
  analyze_cmd->add_option("--csv", an.csv, "Also write a one-row metrics CSV");
  analyze_cmd->add_option("--schedule-csv", an.schedule_csv, "Dump the simulated original timeline");
  analyze_cmd->add_option("-j,--jobs", an.jobs, "Worker threads for the scenario sweep")
      ->check(CLI::Range(1u, 4096u))
      ->capture_default_str();
  analyze_cmd->add_flag("--exact", an.exact, "Exact per-worker slowdowns (one simulation per worker)");
  analyze_cmd->add_option("--threshold", an.thresholds.straggling, "Slowdown at which a job counts as straggling")
      ->capture_default_str();

  std::vector<std::string> report_inputs;
  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "Render heatmaps, CDFs and an HTML index from reports");
  report_cmd->add_option("reports", report_inputs, "One or more report JSON files")->required();
  report_cmd->add_option("-o,--output", report_dir, "Output directory")->required();

  std::string batches, balance_out;
  int dp = 0, mb = 1;
  auto* balance_cmd = app.add_subcommand("balance", "Plan sequence redistribution for each batch");
  balance_cmd->add_option("batches", batches, "One batch per line, whitespace-separated lengths")->required();
  balance_cmd->add_option("--dp", dp, "Data-parallel degree")->required()->check(CLI::PositiveNumber);
  balance_cmd->add_option("--mb", mb, "Microbatches per rank")->required()->check(CLI::PositiveNumber);
  balance_cmd->add_option("-o,--output", balance_out, "Output file (default: stdout)");

  std::string graph_path, graph_out;
  auto* dump_cmd = app.add_subcommand("dump-graph", "Print the dependency graph as DOT");
  dump_cmd->add_option("trace", graph_path, "Trace file")->required();
  dump_cmd->add_option("-o,--output", graph_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*generate_cmd) return run_generate(gen);
    if (*validate_cmd) return run_validate(validate_path);
    if (*analyze_cmd) return run_analyze(an);
    if (*report_cmd) return run_report(report_inputs, report_dir);
    if (*balance_cmd) return run_balance(batches, dp, mb, balance_out);
    if (*dump_cmd) return run_dump_graph(graph_path, graph_out);
  } catch (const Error& e) {
    print_error(e);
    return kFailed;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
