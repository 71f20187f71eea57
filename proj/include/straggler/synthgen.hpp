// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic trace generator. Ground-truth per-op durations (base x jitter x
// injected factors) are turned into timestamps by the same dependency engine
// the what-if simulator uses, following a GPipe or 1F1B launch order.
// Launch delays shift op launches without changing durations, so they are the
// only injection the simulator cannot reproduce.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "straggler/balancer.hpp"
#include "straggler/dep_graph.hpp"
#include "straggler/error.hpp"
#include "straggler/trace.hpp"
#include "straggler/whatif.hpp"

namespace straggler {

enum class PipelineSchedule { GPipe, OneFOneB };

struct LengthDistribution {
  enum class Kind { LogNormal, Constant };
  Kind kind = Kind::LogNormal;
  double mu = 7.3;     // log-space mean: median length ~1.5K tokens
  double sigma = 1.3;  // long right tail
  Tokens value = 1024;
};

struct Injection {
  enum class Kind { SlowWorker, LastStage, SeqlenDriven, GcPause, CommJitter, LaunchDelay };
  Kind kind = Kind::SlowWorker;

  // slow-worker
  WorkerId worker;
  double factor = 1.0;
  std::vector<OpType> ops = {OpType::ForwardCompute, OpType::BackwardCompute};
  // last-stage
  double fwd_factor = 1.0;
  double bwd_factor = 1.0;
  // seqlen-driven
  LengthDistribution distribution;
  Tokens max_seq_len = 32768;
  Tokens capacity = 32768;
  // gc-pause: worker w pauses at steps s with (s + offset(w)) % interval == 0,
  // offset(w) = (global rank * phase_stride) % interval, or explicit offsets.
  int interval_steps = 1;
  Duration pause_us = 0;
  int phase_stride = 1;
  std::vector<int> phase_offsets;  // per global rank (pp * dp_degree + dp), optional
  std::vector<WorkerId> workers;   // restrict GC to these workers, optional
  // comm-jitter
  OpType op = OpType::GradsSync;
  double probability = 0.0;
  // launch-delay (first forward-compute of every step, every worker)
  Duration delay_us = 0;
};

struct GenConfig {
  JobTopology topology;
  PipelineSchedule schedule = PipelineSchedule::OneFOneB;
  Duration base_fwd = 1000;
  Duration base_bwd = 2000;
  Duration base_p2p = 50;
  Duration base_params = 200;
  Duration base_grads = 400;
  double noise = 0.0;
  double backward_ratio = 2.0;
  std::vector<Injection> injections;
  std::uint64_t seed = 0;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  Duration jct = 0;               // with every injection
  Duration no_injection_jct = 0;  // same jitter, no injections, no delays
  double slowdown = 1.0;          // jct / no_injection_jct
  Duration launch_delay_total = 0;
  std::vector<std::pair<WorkerId, int>> gc_pauses;  // (worker, step)
  nlohmann::json injections = nlohmann::json::array();
};

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<OpType> parse_op_kinds(const nlohmann::json& j) {
  std::vector<OpType> out;
  auto add = [&](OpType t) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  };
  for (const auto& e : j) {
    const std::string s = e.get<std::string>();
    if (s == "compute") {
      add(OpType::ForwardCompute);
      add(OpType::BackwardCompute);
    } else if (s == "pp-comm") {
      for (OpType t : kAllOpTypes)
        if (is_pp_comm(t)) add(t);
    } else if (s == "dp-comm") {
      add(OpType::ParamsSync);
      add(OpType::GradsSync);
    } else if (auto t = parse_op_type(s)) {
      add(*t);
    } else {
      throw Error(Errc::InvalidConfig, "unknown op kind \"" + s + "\"");
    }
  }
  return out;
}

inline WorkerId parse_worker(const nlohmann::json& j) {
  if (j.is_array()) return WorkerId{j.at(0).get<int>(), j.at(1).get<int>()};
  return WorkerId{j.at("pp").get<int>(), j.at("dp").get<int>()};
}

}  // namespace detail

inline Injection injection_from_json(const nlohmann::json& j) {
  Injection in;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "slow-worker") {
    in.kind = Injection::Kind::SlowWorker;
    in.worker = WorkerId{j.at("pp").get<int>(), j.at("dp").get<int>()};
    in.factor = j.at("factor").get<double>();
    if (j.contains("ops")) in.ops = detail::parse_op_kinds(j.at("ops"));
  } else if (kind == "last-stage") {
    in.kind = Injection::Kind::LastStage;
    in.fwd_factor = j.at("fwd_factor").get<double>();
    in.bwd_factor = j.at("bwd_factor").get<double>();
  } else if (kind == "seqlen-driven") {
    in.kind = Injection::Kind::SeqlenDriven;
    if (j.contains("distribution")) {
      const auto& d = j.at("distribution");
      const std::string type = d.value("type", "lognormal");
      if (type == "lognormal") {
        in.distribution.kind = LengthDistribution::Kind::LogNormal;
        in.distribution.mu = d.value("mu", in.distribution.mu);
        in.distribution.sigma = d.value("sigma", in.distribution.sigma);
      } else if (type == "constant") {
        in.distribution.kind = LengthDistribution::Kind::Constant;
        in.distribution.value = d.at("value").get<Tokens>();
      } else {
        throw Error(Errc::InvalidConfig, "unknown length distribution \"" + type + "\"");
      }
    }
    in.max_seq_len = j.value("max_seq_len", in.max_seq_len);
    in.capacity = j.value("capacity", in.max_seq_len);
  } else if (kind == "gc-pause") {
    in.kind = Injection::Kind::GcPause;
    in.interval_steps = j.at("interval_steps").get<int>();
    in.pause_us = j.at("pause_us").get<double>();
    in.phase_stride = j.value("phase_stride", 1);
    if (j.contains("phase_offsets")) in.phase_offsets = j.at("phase_offsets").get<std::vector<int>>();
    if (j.contains("workers"))
      for (const auto& w : j.at("workers")) in.workers.push_back(detail::parse_worker(w));
  } else if (kind == "comm-jitter") {
    in.kind = Injection::Kind::CommJitter;
    const auto op = parse_op_type(j.at("op").get<std::string>());
    if (!op || is_compute(*op)) throw Error(Errc::InvalidConfig, "comm-jitter needs a communication op");
    in.op = *op;
    in.factor = j.at("factor").get<double>();
    in.probability = j.at("probability").get<double>();
  } else if (kind == "launch-delay") {
    in.kind = Injection::Kind::LaunchDelay;
    in.delay_us = j.at("delay_us").get<double>();
  } else {
    throw Error(Errc::InvalidConfig, "unknown injection kind \"" + kind + "\"");
  }
  return in;
}

inline nlohmann::json to_json(const Injection& in) {
  using K = Injection::Kind;
  nlohmann::json ops = nlohmann::json::array();
  for (OpType t : in.ops) ops.push_back(std::string(op_name(t)));
  switch (in.kind) {
    case K::SlowWorker:
      return {{"kind", "slow-worker"}, {"pp", in.worker.pp_rank}, {"dp", in.worker.dp_rank},
              {"factor", in.factor}, {"ops", ops}};
    case K::LastStage:
      return {{"kind", "last-stage"}, {"fwd_factor", in.fwd_factor}, {"bwd_factor", in.bwd_factor}};
    case K::SeqlenDriven: {
      nlohmann::json d =
          in.distribution.kind == LengthDistribution::Kind::LogNormal
              ? nlohmann::json{{"type", "lognormal"}, {"mu", in.distribution.mu}, {"sigma", in.distribution.sigma}}
              : nlohmann::json{{"type", "constant"}, {"value", in.distribution.value}};
      return {{"kind", "seqlen-driven"}, {"distribution", d}, {"max_seq_len", in.max_seq_len},
              {"capacity", in.capacity}};
    }
    case K::GcPause: {
      nlohmann::json ws = nlohmann::json::array();
      for (const WorkerId& w : in.workers) ws.push_back({w.pp_rank, w.dp_rank});
      nlohmann::json j = {{"kind", "gc-pause"}, {"interval_steps", in.interval_steps},
                          {"pause_us", in.pause_us}, {"phase_stride", in.phase_stride}};
      if (!in.phase_offsets.empty()) j["phase_offsets"] = in.phase_offsets;
      if (!in.workers.empty()) j["workers"] = ws;
      return j;
    }
    case K::CommJitter:
      return {{"kind", "comm-jitter"}, {"op", std::string(op_name(in.op))}, {"factor", in.factor},
              {"probability", in.probability}};
    case K::LaunchDelay: return {{"kind", "launch-delay"}, {"delay_us", in.delay_us}};
  }
  return {};
}

inline GenConfig config_from_json(const nlohmann::json& j) {
  GenConfig c;
  try {
    c.topology.dp_degree = j.at("dp_degree").get<int>();
    c.topology.pp_degree = j.at("pp_degree").get<int>();
    c.topology.num_steps = j.at("num_steps").get<int>();
    c.topology.microbatches_per_step = j.at("microbatches_per_step").get<int>();
    const std::string sched = j.value("schedule", "1f1b");
    if (sched == "gpipe") c.schedule = PipelineSchedule::GPipe;
    else if (sched == "1f1b") c.schedule = PipelineSchedule::OneFOneB;
    else throw Error(Errc::InvalidConfig, "unknown schedule \"" + sched + "\"");
    c.base_fwd = j.value("base_fwd_us", c.base_fwd);
    c.base_bwd = j.value("base_bwd_us", c.base_bwd);
    c.base_p2p = j.value("base_p2p_us", c.base_p2p);
    c.base_params = j.value("base_params_us", c.base_params);
    c.base_grads = j.value("base_grads_us", c.base_grads);
    c.noise = j.value("noise", c.noise);
    c.backward_ratio = j.value("backward_ratio", c.backward_ratio);
    c.seed = j.value("seed", c.seed);
    if (j.contains("injections"))
      for (const auto& e : j.at("injections")) c.injections.push_back(injection_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
  return c;
}

inline nlohmann::json to_json(const GenConfig& c) {
  nlohmann::json inj = nlohmann::json::array();
  for (const Injection& i : c.injections) inj.push_back(to_json(i));
  return {{"dp_degree", c.topology.dp_degree},
          {"pp_degree", c.topology.pp_degree},
          {"num_steps", c.topology.num_steps},
          {"microbatches_per_step", c.topology.microbatches_per_step},
          {"schedule", c.schedule == PipelineSchedule::GPipe ? "gpipe" : "1f1b"},
          {"base_fwd_us", c.base_fwd},
          {"base_bwd_us", c.base_bwd},
          {"base_p2p_us", c.base_p2p},
          {"base_params_us", c.base_params},
          {"base_grads_us", c.base_grads},
          {"noise", c.noise},
          {"backward_ratio", c.backward_ratio},
          {"seed", c.seed},
          {"injections", inj}};
}

inline nlohmann::json to_json(const GroundTruth& g) {
  nlohmann::json gc = nlohmann::json::array();
  for (const auto& [w, s] : g.gc_pauses) gc.push_back({{"pp", w.pp_rank}, {"dp", w.dp_rank}, {"step", s}});
  return {{"seed", g.seed},
          {"jct_us", g.jct},
          {"no_injection_jct_us", g.no_injection_jct},
          {"slowdown", g.slowdown},
          {"launch_delay_total_us", g.launch_delay_total},
          {"gc_pauses", gc},
          {"injections", g.injections}};
}

inline void check_config(const GenConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  const JobTopology& t = c.topology;
  if (!t.valid()) fail("topology fields must be >= 1");
  if (!(c.base_fwd > 0 && c.base_bwd > 0 && c.base_p2p > 0 && c.base_params > 0 && c.base_grads > 0))
    fail("base durations must be > 0");
  if (!(c.noise >= 0 && c.noise < 1)) fail("noise must be in [0, 1)");
  if (!(c.backward_ratio > 0)) fail("backward_ratio must be > 0");
  for (const Injection& in : c.injections) {
    using K = Injection::Kind;
    switch (in.kind) {
      case K::SlowWorker:
        if (in.worker.pp_rank < 0 || in.worker.pp_rank >= t.pp_degree || in.worker.dp_rank < 0 ||
            in.worker.dp_rank >= t.dp_degree)
          fail("slow-worker outside topology");
        if (!(in.factor >= 1)) fail("slow-worker factor must be >= 1");
        break;
      case K::LastStage:
        if (!(in.fwd_factor >= 1 && in.bwd_factor >= 1)) fail("last-stage factors must be >= 1");
        break;
      case K::SeqlenDriven:
        if (in.max_seq_len < 1 || in.capacity < in.max_seq_len)
          fail("seqlen-driven needs 1 <= max_seq_len <= capacity");
        if (in.distribution.kind == LengthDistribution::Kind::Constant &&
            (in.distribution.value < 1 || in.distribution.value > in.max_seq_len))
          fail("constant length must be in [1, max_seq_len]");
        break;
      case K::GcPause:
        if (in.interval_steps < 1 || in.pause_us < 0) fail("gc-pause needs interval >= 1, pause >= 0");
        if (!in.phase_offsets.empty() && in.phase_offsets.size() != static_cast<std::size_t>(t.num_workers()))
          fail("gc-pause phase_offsets needs one entry per worker");
        for (const WorkerId& w : in.workers)
          if (w.pp_rank < 0 || w.pp_rank >= t.pp_degree || w.dp_rank < 0 || w.dp_rank >= t.dp_degree)
            fail("gc-pause worker outside topology");
        break;
      case K::CommJitter:
        if (!(in.factor >= 1)) fail("comm-jitter factor must be >= 1");
        if (!(in.probability >= 0 && in.probability <= 1)) fail("comm-jitter probability must be in [0, 1]");
        break;
      case K::LaunchDelay:
        if (in.delay_us < 0) fail("launch delay must be >= 0");
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Sequence packing
// ---------------------------------------------------------------------------

inline Tokens draw_length(std::mt19937_64& rng, const LengthDistribution& d, Tokens max_seq_len) {
  if (d.kind == LengthDistribution::Kind::Constant) return d.value;
  std::lognormal_distribution<double> dist(d.mu, d.sigma);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto s = static_cast<Tokens>(std::llround(dist(rng)));
    if (s >= 1 && s <= max_seq_len) return s;
  }
  return max_seq_len;
}

/// Packs randomly drawn lengths into `count` microbatches: each microbatch
/// takes draws until the next one would overflow `capacity`; that draw opens
/// the following microbatch.
inline std::vector<std::vector<Tokens>> seqlen_sample(std::mt19937_64& rng, const LengthDistribution& dist,
                                                      Tokens max_seq_len, Tokens capacity,
                                                      std::size_t count) {
  if (capacity < max_seq_len) throw Error(Errc::InvalidConfig, "capacity must be >= max_seq_len");
  std::vector<std::vector<Tokens>> out;
  out.reserve(count);
  std::vector<Tokens> current;
  Tokens sum = 0;
  while (out.size() < count) {
    const Tokens s = draw_length(rng, dist, max_seq_len);
    if (!current.empty() && sum + s > capacity) {
      out.push_back(std::move(current));
      current.clear();
      sum = 0;
      if (out.size() == count) break;
    }
    current.push_back(s);
    sum += s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Compute-stream launch order of one pipeline stage within a step.
inline std::vector<std::pair<OpType, int>> stage_order(PipelineSchedule sched, int pp_rank, int pp_degree,
                                                       int microbatches) {
  std::vector<std::pair<OpType, int>> out;
  if (sched == PipelineSchedule::GPipe) {
    for (int m = 0; m < microbatches; ++m) out.emplace_back(OpType::ForwardCompute, m);
    for (int m = microbatches - 1; m >= 0; --m) out.emplace_back(OpType::BackwardCompute, m);
    return out;
  }
  const int warmup = std::min(pp_degree - pp_rank - 1, microbatches);
  int f = 0, b = 0;
  for (; f < warmup; ++f) out.emplace_back(OpType::ForwardCompute, f);
  for (; f < microbatches; ++f, ++b) {
    out.emplace_back(OpType::ForwardCompute, f);
    out.emplace_back(OpType::BackwardCompute, b);
  }
  for (; b < microbatches; ++b) out.emplace_back(OpType::BackwardCompute, b);
  return out;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct Generated {
  Trace trace;
  GroundTruth truth;
};

/// Trace skeleton with every cell present and seq set from the schedule;
/// timestamps are all zero.
inline Trace skeleton_trace(const JobTopology& topo, PipelineSchedule sched) {
  Trace t;
  t.topology = topo;
  const Layout L(topo);
  t.records.resize(L.size());
  for (std::size_t id = 0; id < L.size(); ++id) {
    const OpKey k = L.key(id);
    t.records[id] = OpRecord{k.op, k.step, k.microbatch, k.worker, 0, 0, 0};
  }
  const int P = topo.pp_degree, M = topo.microbatches_per_step;
  for (int p = 0; p < P; ++p) {
    const auto order = stage_order(sched, p, P, M);
    for (int d = 0; d < topo.dp_degree; ++d) {
      std::array<int, kNumStreamKinds> next{};
      auto place = [&](OpType op, int step, int mb) {
        const OpKey k{op, step, mb, {p, d}};
        if (!L.contains(k)) return;
        t.records[L.id(k)].seq = next[static_cast<std::size_t>(stream_of(op))]++;
      };
      for (int s = 0; s < topo.num_steps; ++s) {
        place(OpType::ParamsSync, s, 0);
        for (auto [op, mb] : order) {
          place(op, s, mb);
          if (op == OpType::ForwardCompute) {
            place(OpType::ForwardRecv, s, mb);
            place(OpType::ForwardSend, s, mb);
          } else {
            place(OpType::BackwardRecv, s, mb);
            place(OpType::BackwardSend, s, mb);
          }
        }
        place(OpType::GradsSync, s, 0);
      }
    }
  }
  return t;
}

inline Generated generate(const GenConfig& config) {
  check_config(config);
  const JobTopology& topo = config.topology;
  const Layout L(topo);
  const std::size_t n = L.size();
  std::mt19937_64 rng(config.seed);

  std::vector<double> base(n);
  for (std::size_t v = 0; v < n; ++v) {
    switch (L.type_of(v)) {
      case OpType::ForwardCompute: base[v] = config.base_fwd; break;
      case OpType::BackwardCompute: base[v] = config.base_bwd; break;
      case OpType::ParamsSync: base[v] = config.base_params; break;
      case OpType::GradsSync: base[v] = config.base_grads; break;
      default: base[v] = config.base_p2p; break;
    }
  }
  std::vector<double> jitter(n, 1.0);
  if (config.noise > 0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& j : jitter) j = 1.0 + config.noise * u(rng);
  }

  Trace trace = skeleton_trace(topo, config.schedule);
  const DepGraph graph = build_graph(trace);

  // First forward-compute of each (step, worker) in launch order.
  std::vector<std::size_t> first_fwd(static_cast<std::size_t>(topo.num_steps) * topo.num_workers(), n);
  for (const Stream& s : graph.streams()) {
    if (s.id.kind != StreamKind::Compute) continue;
    for (std::size_t v : s.nodes) {
      const OpKey k = graph.key(v);
      const std::size_t slot = static_cast<std::size_t>(k.step) * topo.num_workers() +
                               static_cast<std::size_t>(k.worker.pp_rank) * topo.dp_degree + k.worker.dp_rank;
      if (k.op == OpType::ForwardCompute && first_fwd[slot] == n) first_fwd[slot] = v;
    }
  }

  std::vector<double> factor(n, 1.0);
  std::vector<double> scaled_base = base;  // base after seqlen-driven replacement
  std::vector<Duration> extra(n, 0.0);
  std::vector<Duration> delay(n, 0.0);
  GroundTruth truth;
  truth.seed = config.seed;

  for (const Injection& in : config.injections) {
    truth.injections.push_back(to_json(in));
    using K = Injection::Kind;
    switch (in.kind) {
      case K::SlowWorker:
        for (std::size_t v = 0; v < n; ++v) {
          const OpKey k = L.key(v);
          if (k.worker == in.worker && std::find(in.ops.begin(), in.ops.end(), k.op) != in.ops.end())
            factor[v] *= in.factor;
        }
        break;
      case K::LastStage:
        for (std::size_t v = 0; v < n; ++v) {
          const OpKey k = L.key(v);
          if (k.worker.pp_rank != topo.pp_degree - 1) continue;
          if (k.op == OpType::ForwardCompute) factor[v] *= in.fwd_factor;
          if (k.op == OpType::BackwardCompute) factor[v] *= in.bwd_factor;
        }
        break;
      case K::SeqlenDriven: {
        // One packed sequence set per (step, microbatch, dp rank), shared by
        // every pipeline stage the microbatch passes through.
        const std::size_t sets = static_cast<std::size_t>(topo.num_steps) * topo.microbatches_per_step *
                                 topo.dp_degree;
        const auto packed = seqlen_sample(rng, in.distribution, in.max_seq_len, in.capacity, sets);
        std::vector<double> cost(sets);
        double mean = 0;
        for (std::size_t i = 0; i < sets; ++i) {
          cost[i] = static_cast<double>(microbatch_cost(packed[i]));
          mean += cost[i];
        }
        mean /= static_cast<double>(sets);
        for (std::size_t v = 0; v < n; ++v) {
          const OpKey k = L.key(v);
          if (!is_compute(k.op)) continue;
          const std::size_t i =
              (static_cast<std::size_t>(k.step) * topo.microbatches_per_step + k.microbatch) * topo.dp_degree +
              k.worker.dp_rank;
          const double fwd = config.base_fwd * cost[i] / mean;
          scaled_base[v] = k.op == OpType::ForwardCompute ? fwd : config.backward_ratio * fwd;
        }
        break;
      }
      case K::GcPause:
        for (int p = 0; p < topo.pp_degree; ++p)
          for (int d = 0; d < topo.dp_degree; ++d) {
            const WorkerId w{p, d};
            if (!in.workers.empty() && std::find(in.workers.begin(), in.workers.end(), w) == in.workers.end())
              continue;
            const int rank = p * topo.dp_degree + d;
            const int offset = in.phase_offsets.empty()
                                   ? (rank * in.phase_stride) % in.interval_steps
                                   : in.phase_offsets[static_cast<std::size_t>(rank)];
            for (int s = 0; s < topo.num_steps; ++s) {
              if ((s + offset) % in.interval_steps != 0) continue;
              extra[first_fwd[static_cast<std::size_t>(s) * topo.num_workers() + rank]] += in.pause_us;
              truth.gc_pauses.emplace_back(w, s);
            }
          }
        break;
      case K::CommJitter: {
        std::bernoulli_distribution hit(in.probability);
        const std::size_t lo = L.offset(in.op), hi = lo + L.cells(in.op);
        for (std::size_t v = lo; v < hi; ++v)
          if (hit(rng)) factor[v] *= in.factor;
        break;
      }
      case K::LaunchDelay:
        for (std::size_t v : first_fwd) {
          delay[v] += in.delay_us;
          truth.launch_delay_total += in.delay_us;
        }
        break;
    }
  }

  auto to_us = [](double x) { return std::max<Duration>(1.0, std::round(x)); };
  std::vector<Duration> durations(n), clean(n);
  for (std::size_t v = 0; v < n; ++v) {
    clean[v] = to_us(base[v] * jitter[v]);
    durations[v] = to_us(scaled_base[v] * jitter[v] * factor[v]) + std::round(extra[v]);
  }

  const Schedule sched = detail::simulate_impl(graph, durations, delay);
  for (std::size_t v = 0; v < n; ++v) {
    OpRecord& r = trace.records[v];
    r.start = static_cast<Timestamp>(sched.start[v]);
    r.end = static_cast<Timestamp>(sched.end[v]);
  }
  normalize(trace);
  std::sort(trace.records.begin(), trace.records.end(),
            [](const OpRecord& a, const OpRecord& b) { return a.key() < b.key(); });

  truth.jct = sched.jct;
  truth.no_injection_jct = simulate(graph, clean).jct;
  truth.slowdown = truth.jct / truth.no_injection_jct;
  trace.meta["generator"] = "synthgen";
  trace.meta["seed"] = config.seed;
  return Generated{std::move(trace), std::move(truth)};
}

}  // namespace straggler
