// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "support.hpp"

namespace straggler {
namespace {

// Records in canonical order (step, worker, op type, microbatch).
const char* kMinimal =
    "{\"dp_degree\":1,\"pp_degree\":1,\"num_steps\":1,\"microbatches_per_step\":1}\n"
    "{\"op\":\"forward-compute\",\"step\":0,\"mb\":0,\"pp\":0,\"dp\":0,\"start_us\":2,\"end_us\":12}\n"
    "{\"op\":\"backward-compute\",\"step\":0,\"mb\":0,\"pp\":0,\"dp\":0,\"start_us\":12,\"end_us\":32}\n"
    "{\"op\":\"params-sync\",\"step\":0,\"mb\":0,\"pp\":0,\"dp\":0,\"start_us\":0,\"end_us\":2}\n"
    "{\"op\":\"grads-sync\",\"step\":0,\"mb\":0,\"pp\":0,\"dp\":0,\"start_us\":32,\"end_us\":36}\n";

Errc parse_error(const std::string& text) {
  try {
    parse_trace(std::string_view(text));
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return Errc::Io;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(ParseTest, MinimalJob) {
  const Trace t = parse_trace(std::string_view(kMinimal));
  EXPECT_EQ(t.topology, (JobTopology{1, 1, 1, 1}));
  EXPECT_EQ(t.records.size(), 4u);
}

TEST(ParseTest, UnknownOpTypeCarriesLine) {
  std::string text = kMinimal;
  text += "{\"op\":\"allreduce\",\"step\":0,\"mb\":0,\"pp\":0,\"dp\":0,\"start_us\":0,\"end_us\":1}\n";
  try {
    parse_trace(std::string_view(text));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownOpType);
    EXPECT_EQ(e.line(), 6u);
  }
}

TEST(ParseTest, HeaderAndLineErrors) {
  EXPECT_EQ(parse_error(""), Errc::HeaderMissing);
  EXPECT_EQ(parse_error("{\"op\":\"forward-compute\"}\n"), Errc::HeaderMissing);
  EXPECT_EQ(parse_error("not json\n"), Errc::HeaderMissing);
  std::string bad = kMinimal;
  bad += "{\"op\":\"forward-compute\",\"step\":\"x\"}\n";
  EXPECT_EQ(parse_error(bad), Errc::MalformedLine);
  EXPECT_EQ(parse_error(std::string(kMinimal) + "[1,2]\n"), Errc::MalformedLine);
  EXPECT_EQ(parse_error("{\"dp_degree\":1000000000,\"pp_degree\":1000000,\"num_steps\":1,"
                        "\"microbatches_per_step\":1}\n"),
            Errc::MalformedLine);
}

TEST(ParseTest, IncompleteTraceFailsValidation) {
  const auto lines = lines_of(kMinimal);
  std::string text;
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) text += lines[i] + "\n";
  try {
    parse_trace(std::string_view(text));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ValidationFailed);
    ASSERT_EQ(e.violations().size(), 1u);
    EXPECT_EQ(e.violations()[0].rule, Violation::Rule::MissingCell);
  }
}

TEST(ParseTest, RecordOrderOnDiskDoesNotMatter) {
  GenConfig c;
  c.topology = {2, 3, 2, 4};
  c.noise = 0.1;
  c.seed = 7;
  const std::string canonical = write_trace(generate(c).trace);
  auto lines = lines_of(canonical);
  std::mt19937_64 rng(1);
  std::shuffle(lines.begin() + 1, lines.end(), rng);
  std::string shuffled;
  for (const auto& l : lines) shuffled += l + "\n";
  const Trace a = parse_trace(std::string_view(canonical));
  const Trace b = parse_trace(std::string_view(shuffled));
  EXPECT_EQ(a, b);
  EXPECT_EQ(write_trace(b), canonical);
}

TEST(WriteTest, MinimalJobIsFiveLines) {
  const std::string out = write_trace(parse_trace(std::string_view(kMinimal)));
  EXPECT_EQ(lines_of(out).size(), 5u);
  EXPECT_EQ(out, kMinimal);
}

TEST(WriteTest, MetaIsCarriedInHeader) {
  Trace t = parse_trace(std::string_view(kMinimal));
  t.meta = {{"job", "x"}};
  const std::string out = write_trace(t);
  EXPECT_NE(lines_of(out)[0].find("\"meta\":{\"job\":\"x\"}"), std::string::npos);
  EXPECT_EQ(parse_trace(std::string_view(out)).meta, t.meta);
}

TEST(WriteTest, SecondWriteIsByteIdentical) {
  GenConfig c;
  c.topology = {3, 2, 3, 2};
  c.noise = 0.2;
  c.seed = 11;
  const std::string first = write_trace(generate(c).trace);
  EXPECT_EQ(write_trace(parse_trace(std::string_view(first))), first);
}

TEST(FileTest, GzipRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path();
  const Trace t = testing::uniform_trace({2, 2, 2, 2});
  for (const char* name : {"straggler_io_test.ndtrace.jsonl", "straggler_io_test.ndtrace.jsonl.gz"}) {
    const std::string path = (dir / name).string();
    write_trace_file(path, t);
    EXPECT_EQ(read_trace_file(path), t);
    std::filesystem::remove(path);
  }
}

TEST(FileTest, MissingFileIsIoError) {
  try {
    read_trace_file("/nonexistent/trace.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Io);
  }
}

}  // namespace
}  // namespace straggler
