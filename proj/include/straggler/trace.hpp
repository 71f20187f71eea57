// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "straggler/error.hpp"

namespace straggler {

using Timestamp = std::int64_t;  // microseconds since the job epoch
using Duration = double;         // microseconds

// ---------------------------------------------------------------------------
// Operation types
// ---------------------------------------------------------------------------

enum class OpType : std::uint8_t {
  ForwardCompute,
  BackwardCompute,
  ForwardSend,
  ForwardRecv,
  BackwardSend,
  BackwardRecv,
  ParamsSync,
  GradsSync,
};

inline constexpr std::size_t kNumOpTypes = 8;

inline constexpr std::array<OpType, kNumOpTypes> kAllOpTypes = {
    OpType::ForwardCompute, OpType::BackwardCompute, OpType::ForwardSend,
    OpType::ForwardRecv,    OpType::BackwardSend,    OpType::BackwardRecv,
    OpType::ParamsSync,     OpType::GradsSync,
};

inline constexpr std::size_t index_of(OpType t) { return static_cast<std::size_t>(t); }

inline constexpr std::string_view op_name(OpType t) {
  constexpr std::array<std::string_view, kNumOpTypes> names = {
      "forward-compute", "backward-compute", "forward-send", "forward-recv",
      "backward-send",   "backward-recv",    "params-sync",  "grads-sync",
  };
  return names[index_of(t)];
}

inline std::optional<OpType> parse_op_type(std::string_view name) {
  for (OpType t : kAllOpTypes)
    if (op_name(t) == name) return t;
  return std::nullopt;
}

inline constexpr bool is_compute(OpType t) {
  return t == OpType::ForwardCompute || t == OpType::BackwardCompute;
}
inline constexpr bool is_pp_comm(OpType t) {
  return t == OpType::ForwardSend || t == OpType::ForwardRecv ||
         t == OpType::BackwardSend || t == OpType::BackwardRecv;
}
inline constexpr bool is_dp_comm(OpType t) {
  return t == OpType::ParamsSync || t == OpType::GradsSync;
}
inline constexpr bool is_comm(OpType t) { return !is_compute(t); }

// ---------------------------------------------------------------------------
// Topology and identifiers
// ---------------------------------------------------------------------------

struct JobTopology {
  int dp_degree = 1;
  int pp_degree = 1;
  int num_steps = 1;
  int microbatches_per_step = 1;

  int num_workers() const { return dp_degree * pp_degree; }
  bool valid() const {
    return dp_degree >= 1 && pp_degree >= 1 && num_steps >= 1 && microbatches_per_step >= 1;
  }
  friend bool operator==(const JobTopology&, const JobTopology&) = default;
};

struct WorkerId {
  int pp_rank = 0;
  int dp_rank = 0;

  friend auto operator<=>(const WorkerId&, const WorkerId&) = default;
  std::string str() const {
    return "(" + std::to_string(pp_rank) + "," + std::to_string(dp_rank) + ")";
  }
};

/// Identity of one traced operation. Canonical order is
/// (step, pp, dp, op_type, microbatch).
struct OpKey {
  OpType op = OpType::ForwardCompute;
  int step = 0;
  int microbatch = 0;
  WorkerId worker;

  auto tie() const {
    return std::make_tuple(step, worker.pp_rank, worker.dp_rank, index_of(op), microbatch);
  }
  friend bool operator==(const OpKey& a, const OpKey& b) { return a.tie() == b.tie(); }
  friend bool operator<(const OpKey& a, const OpKey& b) { return a.tie() < b.tie(); }

  std::string str() const {
    return std::string(op_name(op)) + "[s=" + std::to_string(step) +
           ",mb=" + std::to_string(microbatch) + ",pp=" + std::to_string(worker.pp_rank) +
           ",dp=" + std::to_string(worker.dp_rank) + "]";
  }
};

struct OpRecord {
  OpType op = OpType::ForwardCompute;
  int step = 0;
  int microbatch = 0;
  WorkerId worker;
  Timestamp start = 0;
  Timestamp end = 0;
  int seq = 0;  // launch order within its stream, assigned at ingest

  OpKey key() const { return OpKey{op, step, microbatch, worker}; }
  Duration duration() const { return static_cast<Duration>(end - start); }
  friend bool operator==(const OpRecord&, const OpRecord&) = default;
};

struct Trace {
  JobTopology topology;
  std::vector<OpRecord> records;
  nlohmann::json meta = nlohmann::json::object();

  friend bool operator==(const Trace& a, const Trace& b) {
    return a.topology == b.topology && a.records == b.records && a.meta == b.meta;
  }
};

// ---------------------------------------------------------------------------
// Dense layout of every operation cell implied by a topology.
// ---------------------------------------------------------------------------

/// Ranks of the pipeline on which an op type exists: sends towards the next
/// stage are absent on the last stage, receives from the previous stage are
/// absent on the first, and so on.
struct PpRange {
  int lo = 0;
  int hi = 0;  // exclusive
  int extent() const { return std::max(0, hi - lo); }
  bool contains(int p) const { return p >= lo && p < hi; }
};

inline PpRange pp_range(OpType t, int pp_degree) {
  switch (t) {
    case OpType::ForwardSend:
    case OpType::BackwardRecv: return {0, pp_degree - 1};
    case OpType::ForwardRecv:
    case OpType::BackwardSend: return {1, pp_degree};
    default: return {0, pp_degree};
  }
}

/// Maps every cell (op_type, step, microbatch, pp, dp) to a dense node id.
class Layout {
 public:
  Layout() = default;
  explicit Layout(const JobTopology& topo) : topo_(topo) {
    std::size_t off = 0;
    for (OpType t : kAllOpTypes) {
      offsets_[index_of(t)] = off;
      off += cells(t);
    }
    total_ = off;
  }

  const JobTopology& topology() const { return topo_; }
  std::size_t size() const { return total_; }

  int mb_extent(OpType t) const { return is_dp_comm(t) ? 1 : topo_.microbatches_per_step; }
  PpRange pp(OpType t) const { return pp_range(t, topo_.pp_degree); }
  std::size_t cells(OpType t) const {
    return static_cast<std::size_t>(topo_.num_steps) * mb_extent(t) * pp(t).extent() *
           topo_.dp_degree;
  }
  std::size_t offset(OpType t) const { return offsets_[index_of(t)]; }

  bool contains(const OpKey& k) const {
    return k.step >= 0 && k.step < topo_.num_steps && k.microbatch >= 0 &&
           k.microbatch < mb_extent(k.op) && pp(k.op).contains(k.worker.pp_rank) &&
           k.worker.dp_rank >= 0 && k.worker.dp_rank < topo_.dp_degree;
  }

  /// Index of a cell within its op type's tensor.
  std::size_t local(const OpKey& k) const {
    const PpRange r = pp(k.op);
    return ((static_cast<std::size_t>(k.step) * mb_extent(k.op) + k.microbatch) * r.extent() +
            (k.worker.pp_rank - r.lo)) *
               topo_.dp_degree +
           k.worker.dp_rank;
  }
  std::size_t id(const OpKey& k) const { return offset(k.op) + local(k); }

  OpType type_of(std::size_t id) const {
    for (std::size_t i = kNumOpTypes; i-- > 0;)
      if (id >= offsets_[i]) {
        // Skip empty trailing ranges so ids resolve to the type that owns them.
        if (cells(kAllOpTypes[i]) == 0) continue;
        return kAllOpTypes[i];
      }
    return OpType::ForwardCompute;
  }

  OpKey key_local(OpType t, std::size_t local) const {
    const PpRange r = pp(t);
    OpKey k;
    k.op = t;
    k.worker.dp_rank = static_cast<int>(local % topo_.dp_degree);
    local /= topo_.dp_degree;
    k.worker.pp_rank = static_cast<int>(local % r.extent()) + r.lo;
    local /= r.extent();
    k.microbatch = static_cast<int>(local % mb_extent(t));
    k.step = static_cast<int>(local / mb_extent(t));
    return k;
  }
  OpKey key(std::size_t id) const {
    const OpType t = type_of(id);
    return key_local(t, id - offset(t));
  }

 private:
  JobTopology topo_;
  std::array<std::size_t, kNumOpTypes> offsets_{};
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Streams
// ---------------------------------------------------------------------------

enum class StreamKind : std::uint8_t { Compute, DpComm, FwdSend, FwdRecv, BwdSend, BwdRecv };

inline constexpr std::size_t kNumStreamKinds = 6;

inline constexpr StreamKind stream_of(OpType t) {
  switch (t) {
    case OpType::ForwardCompute:
    case OpType::BackwardCompute: return StreamKind::Compute;
    case OpType::ParamsSync:
    case OpType::GradsSync: return StreamKind::DpComm;
    case OpType::ForwardSend: return StreamKind::FwdSend;
    case OpType::ForwardRecv: return StreamKind::FwdRecv;
    case OpType::BackwardSend: return StreamKind::BwdSend;
    case OpType::BackwardRecv: return StreamKind::BwdRecv;
  }
  return StreamKind::Compute;
}

inline constexpr std::string_view stream_name(StreamKind k) {
  constexpr std::array<std::string_view, kNumStreamKinds> names = {
      "compute", "dp-comm", "fwd-send", "fwd-recv", "bwd-send", "bwd-recv"};
  return names[static_cast<std::size_t>(k)];
}

// ---------------------------------------------------------------------------
// Validation and ingest normalization
// ---------------------------------------------------------------------------

inline std::vector<Violation> validate(const Trace& trace) {
  std::vector<Violation> out;
  const JobTopology& topo = trace.topology;
  if (!topo.valid()) {
    out.push_back({Violation::Rule::OutOfRange, "topology",
                   "all topology fields must be >= 1"});
    return out;
  }
  const Layout layout(topo);
  std::vector<char> seen(layout.size(), 0);
  for (const OpRecord& r : trace.records) {
    const OpKey k = r.key();
    if (r.end < r.start)
      out.push_back({Violation::Rule::NegativeDuration, k.str(),
                     "end " + std::to_string(r.end) + " < start " + std::to_string(r.start)});
    if (!layout.contains(k)) {
      out.push_back({Violation::Rule::OutOfRange, k.str(),
                     "cell is not implied by the job topology"});
      continue;
    }
    char& s = seen[layout.id(k)];
    if (s) out.push_back({Violation::Rule::DuplicateRecord, k.str(), "cell appears more than once"});
    s = 1;
  }
  constexpr std::size_t kListedMissing = 100;
  std::size_t missing = 0;
  for (std::size_t id = 0; id < seen.size(); ++id) {
    if (seen[id]) continue;
    if (++missing <= kListedMissing)
      out.push_back({Violation::Rule::MissingCell, layout.key(id).str(), "no record for cell"});
  }
  if (missing > kListedMissing)
    out.push_back({Violation::Rule::MissingCell, "*",
                   std::to_string(missing - kListedMissing) + " more cells have no record"});
  return out;
}

/// Re-densifies step ids to 0..n-1 (recording the originals in
/// meta["original_steps"]) and assigns per-stream launch ordinals.
inline void normalize(Trace& trace) {
  std::vector<int> steps;
  steps.reserve(trace.records.size());
  for (const OpRecord& r : trace.records) steps.push_back(r.step);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  bool dense = true;
  for (std::size_t i = 0; i < steps.size(); ++i) dense = dense && steps[i] == static_cast<int>(i);
  if (!dense) {
    for (OpRecord& r : trace.records)
      r.step = static_cast<int>(std::lower_bound(steps.begin(), steps.end(), r.step) - steps.begin());
    trace.meta["original_steps"] = steps;
  }

  // seq: ascending start, ties broken by (op name, microbatch, step).
  using StreamKey = std::tuple<int, int, int>;  // pp, dp, stream kind
  std::map<StreamKey, std::vector<std::size_t>> streams;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const OpRecord& r = trace.records[i];
    streams[{r.worker.pp_rank, r.worker.dp_rank, static_cast<int>(stream_of(r.op))}].push_back(i);
  }
  for (auto& [_, idx] : streams) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const OpRecord& x = trace.records[a];
      const OpRecord& y = trace.records[b];
      return std::make_tuple(x.start, op_name(x.op), x.microbatch, x.step) <
             std::make_tuple(y.start, op_name(y.op), y.microbatch, y.step);
    });
    for (std::size_t s = 0; s < idx.size(); ++s) trace.records[idx[s]].seq = static_cast<int>(s);
  }
}

/// Record position per dense node id; requires a trace that passes validate().
inline std::vector<std::size_t> index_records(const Trace& trace, const Layout& layout) {
  constexpr std::size_t kMissing = static_cast<std::size_t>(-1);
  std::vector<std::size_t> pos(layout.size(), kMissing);
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const OpKey k = trace.records[i].key();
    if (layout.contains(k)) pos[layout.id(k)] = i;
  }
  return pos;
}

// ---------------------------------------------------------------------------
// OpDuration tensors
// ---------------------------------------------------------------------------

/// Dense [step, microbatch, pp, dp] durations for one op type. The microbatch
/// axis has extent 1 for DP collectives and the pp axis spans only the ranks
/// where the op type exists.
class OpDurationTensor {
 public:
  OpDurationTensor() = default;
  OpDurationTensor(OpType op, const JobTopology& topo, std::vector<Duration> values)
      : op_(op), layout_(topo), values_(std::move(values)) {
    if (values_.size() != layout_.cells(op_))
      throw Error(Errc::IncompleteCoverage,
                  std::string(op_name(op_)) + " tensor needs " +
                      std::to_string(layout_.cells(op_)) + " cells, got " +
                      std::to_string(values_.size()));
    for (Duration v : values_)
      if (v < 0) throw Error(Errc::IncompleteCoverage, "negative tensor value");
  }

  OpType op_type() const { return op_; }
  const JobTopology& topology() const { return layout_.topology(); }
  std::size_t size() const { return values_.size(); }
  const std::vector<Duration>& values() const { return values_; }

  bool contains(int step, int mb, int pp, int dp) const {
    return layout_.contains(OpKey{op_, step, mb, {pp, dp}});
  }
  Duration at(int step, int mb, int pp, int dp) const {
    const OpKey k{op_, step, mb, {pp, dp}};
    if (!layout_.contains(k)) throw std::out_of_range("cell " + k.str());
    return values_[layout_.local(k)];
  }
  Duration operator[](std::size_t local) const { return values_[local]; }
  OpKey key(std::size_t local) const { return layout_.key_local(op_, local); }

 private:
  OpType op_ = OpType::ForwardCompute;
  Layout layout_;
  std::vector<Duration> values_;
};

inline OpDurationTensor tensor_from_trace(const Trace& trace, OpType op,
                                          const std::map<OpKey, Duration>& durations) {
  const Layout layout(trace.topology);
  std::vector<Duration> values(layout.cells(op));
  std::size_t missing = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto it = durations.find(layout.key_local(op, i));
    if (it == durations.end()) {
      ++missing;
      continue;
    }
    values[i] = it->second;
  }
  if (missing)
    throw Error(Errc::IncompleteCoverage, std::to_string(missing) + " " +
                                              std::string(op_name(op)) + " cells lack a duration");
  return OpDurationTensor(op, trace.topology, std::move(values));
}

/// Raw end - start durations of every record of `op`.
inline std::map<OpKey, Duration> traced_durations(const Trace& trace, OpType op) {
  std::map<OpKey, Duration> out;
  for (const OpRecord& r : trace.records)
    if (r.op == op) out[r.key()] = r.duration();
  return out;
}

}  // namespace straggler
