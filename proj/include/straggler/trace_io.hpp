// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON Lines trace format. Line 1 is a header object
//   {"dp_degree":D,"pp_degree":P,"num_steps":N,"microbatches_per_step":M,"meta":{...}}
// and every following line is one record
//   {"op":"forward-compute","step":0,"mb":0,"pp":0,"dp":0,"start_us":0,"end_us":10}
// Files ending in ".gz" are transparently (de)compressed.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "straggler/error.hpp"
#include "straggler/log.hpp"
#include "straggler/trace.hpp"

namespace straggler {

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool read_int_field(const nlohmann::json& obj, const char* key, std::int64_t& out) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) return false;
  out = it->get<std::int64_t>();
  return true;
}

inline void sort_canonical(std::vector<OpRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const OpRecord& a, const OpRecord& b) { return a.key() < b.key(); });
}

}  // namespace detail

// Bounds on header topology so a corrupt header cannot request absurd allocations.
inline constexpr std::int64_t kMaxDegree = 1 << 20;
inline constexpr double kMaxCells = 1 << 27;

inline Trace parse_trace(std::string_view text) {
  static const char* kRecordKeys[] = {"op", "step", "mb", "pp", "dp", "start_us", "end_us"};

  Trace trace;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (nl == text.size()) break;
      continue;
    }

    nlohmann::json obj = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      if (!have_header) throw Error(Errc::HeaderMissing, "first line is not a JSON header object");
      throw Error(Errc::MalformedLine, "not a JSON object", line_no);
    }

    if (!have_header) {
      std::int64_t dp, pp, steps, mbs;
      if (!detail::read_int_field(obj, "dp_degree", dp) ||
          !detail::read_int_field(obj, "pp_degree", pp) ||
          !detail::read_int_field(obj, "num_steps", steps) ||
          !detail::read_int_field(obj, "microbatches_per_step", mbs))
        throw Error(Errc::HeaderMissing, "header needs integer dp_degree, pp_degree, num_steps, "
                                         "microbatches_per_step");
      for (std::int64_t x : {dp, pp, steps, mbs})
        if (x < 1 || x > kMaxDegree)
          throw Error(Errc::MalformedLine, "topology fields must lie in [1, " + std::to_string(kMaxDegree) + "]",
                      line_no);
      if (static_cast<double>(dp) * static_cast<double>(pp) * static_cast<double>(steps) *
              static_cast<double>(mbs) * kNumOpTypes > kMaxCells)
        throw Error(Errc::MalformedLine, "topology implies more than " + std::to_string(kMaxCells) + " cells",
                    line_no);
      trace.topology = JobTopology{static_cast<int>(dp), static_cast<int>(pp),
                                   static_cast<int>(steps), static_cast<int>(mbs)};
      if (auto it = obj.find("meta"); it != obj.end()) {
        if (!it->is_object()) throw Error(Errc::MalformedLine, "meta must be an object", line_no);
        trace.meta = *it;
      }
      have_header = true;
      continue;
    }

    auto op_it = obj.find("op");
    if (op_it == obj.end() || !op_it->is_string())
      throw Error(Errc::MalformedLine, "missing string key \"op\"", line_no);
    const auto op = parse_op_type(op_it->get_ref<const std::string&>());
    if (!op) throw Error(Errc::UnknownOpType, op_it->get<std::string>(), line_no);

    std::int64_t v[6];
    for (int i = 0; i < 6; ++i)
      if (!detail::read_int_field(obj, kRecordKeys[i + 1], v[i]))
        throw Error(Errc::MalformedLine,
                    std::string("missing integer key \"") + kRecordKeys[i + 1] + "\"", line_no);
    for (int i = 0; i < 4; ++i)
      if (v[i] < std::numeric_limits<int>::min() || v[i] > std::numeric_limits<int>::max())
        throw Error(Errc::MalformedLine, std::string("\"") + kRecordKeys[i + 1] + "\" out of range", line_no);
    if (obj.size() > 7)
      for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::find_if(std::begin(kRecordKeys), std::end(kRecordKeys), [&](const char* k) {
              return it.key() == k;
            }) == std::end(kRecordKeys))
          log().warn("line {}: ignoring unknown key \"{}\"", line_no, it.key());

    OpRecord r;
    r.op = *op;
    r.step = static_cast<int>(v[0]);
    r.microbatch = static_cast<int>(v[1]);
    r.worker = WorkerId{static_cast<int>(v[2]), static_cast<int>(v[3])};
    r.start = v[4];
    r.end = v[5];
    trace.records.push_back(r);
  }
  if (!have_header) throw Error(Errc::HeaderMissing, "empty input");

  normalize(trace);
  detail::sort_canonical(trace.records);
  if (auto violations = validate(trace); !violations.empty()) {
    const std::string what = std::to_string(violations.size()) + " violation(s), first: " +
                             rule_name(violations.front().rule) + " " + violations.front().key;
    throw Error(Errc::ValidationFailed, what, std::nullopt, std::move(violations));
  }
  return trace;
}

inline Trace parse_trace(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_trace(std::string_view(text));
}

inline std::string write_trace(const Trace& trace) {
  std::string out = "{\"dp_degree\":" + std::to_string(trace.topology.dp_degree) +
                    ",\"pp_degree\":" + std::to_string(trace.topology.pp_degree) +
                    ",\"num_steps\":" + std::to_string(trace.topology.num_steps) +
                    ",\"microbatches_per_step\":" +
                    std::to_string(trace.topology.microbatches_per_step);
  if (trace.meta.is_object() && !trace.meta.empty()) out += ",\"meta\":" + trace.meta.dump();
  out += "}\n";

  std::vector<const OpRecord*> sorted;
  sorted.reserve(trace.records.size());
  for (const OpRecord& r : trace.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const OpRecord* a, const OpRecord* b) { return a->key() < b->key(); });

  out.reserve(out.size() + sorted.size() * 96);
  char buf[192];
  for (const OpRecord* r : sorted) {
    const int n = std::snprintf(
        buf, sizeof buf,
        "{\"op\":\"%s\",\"step\":%d,\"mb\":%d,\"pp\":%d,\"dp\":%d,\"start_us\":%lld,\"end_us\":%lld}\n",
        std::string(op_name(r->op)).c_str(), r->step, r->microbatch, r->worker.pp_rank,
        r->worker.dp_rank, static_cast<long long>(r->start), static_cast<long long>(r->end));
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files (gzip when the path ends in ".gz")
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  if (detail::ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw Error(Errc::Io, "cannot open " + path);
    std::string data;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) data.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw Error(Errc::Io, "gzip read error in " + path);
    return data;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view data) {
  if (detail::ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw Error(Errc::Io, "cannot open " + path);
    const int n = data.empty() ? 0 : gzwrite(f, data.data(), static_cast<unsigned>(data.size()));
    gzclose(f);
    if (!data.empty() && n <= 0) throw Error(Errc::Io, "gzip write error in " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot open " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::Io, "write error in " + path);
}

inline Trace read_trace_file(const std::string& path) { return parse_trace(read_file(path)); }

inline void write_trace_file(const std::string& path, const Trace& trace) {
  write_file(path, write_trace(trace));
}

}  // namespace straggler
