// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <functional>

#include "support.hpp"

namespace straggler {
namespace {

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::Io;
}

GenConfig seqlen_config(JobTopology topo, std::uint64_t seed) {
  GenConfig c;
  c.topology = topo;
  c.noise = 0.05;
  c.seed = seed;
  Injection in;
  in.kind = Injection::Kind::SeqlenDriven;
  c.injections.push_back(in);
  return c;
}

TEST(GenerateTest, SameSeedSameBytes) {
  GenConfig c = seqlen_config({2, 3, 3, 4}, 9);
  Injection gc;
  gc.kind = Injection::Kind::GcPause;
  gc.interval_steps = 2;
  gc.pause_us = 700;
  c.injections.push_back(gc);
  EXPECT_EQ(write_trace(generate(c).trace), write_trace(generate(c).trace));
  GenConfig other = c;
  other.seed = 10;
  EXPECT_NE(write_trace(generate(c).trace), write_trace(generate(other).trace));
}

TEST(GenerateTest, OutputValidatesAndBuilds) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    GenConfig c = seqlen_config(testing::random_topology(rng, 4, 4, 3, 5), trial);
    c.schedule = trial % 2 ? PipelineSchedule::GPipe : PipelineSchedule::OneFOneB;
    const Trace t = generate(c).trace;
    EXPECT_TRUE(validate(t).empty());
    EXPECT_NO_THROW(build_graph(t));
  }
}

TEST(GenerateTest, ClosedLoopReproducesTimeline) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 15; ++trial) {
    GenConfig c = testing::slow_worker_config(testing::random_topology(rng, 4, 4, 3, 4), {0, 0}, 1.6, 0.2, trial);
    Injection jit;
    jit.kind = Injection::Kind::CommJitter;
    jit.op = OpType::GradsSync;
    jit.factor = 3;
    jit.probability = 0.3;
    c.injections.push_back(jit);
    const Generated g = generate(c);
    const Schedule s = WhatIf(g.trace).run(Scenario::original());
    EXPECT_EQ(s.jct, g.truth.jct);
    EXPECT_EQ(discrepancy(s, g.trace).value, 0.0);
  }
}

TEST(GenerateTest, NoInjectionMeansNoSlowdown) {
  GenConfig c;
  c.topology = {4, 4, 3, 4};
  const Generated g = generate(c);
  EXPECT_EQ(g.truth.slowdown, 1.0);
  EXPECT_EQ(g.truth.jct, g.truth.no_injection_jct);
  const WhatIf wi(g.trace);
  EXPECT_EQ(slowdown(wi.run(Scenario::original()).jct, wi.run(Scenario::fix_all()).jct), 1.0);
}

TEST(GenerateTest, SlowWorkerEstimateTracksTruth) {
  const Generated g = generate(testing::slow_worker_config({4, 4, 4, 8}, {0, 0}, 2.0, 0.05, 21));
  EXPECT_GT(g.truth.slowdown, 1.0);
  const WhatIf wi(g.trace);
  const double S = slowdown(wi.run(Scenario::original()).jct, wi.run(Scenario::fix_all()).jct);
  EXPECT_NEAR(S / g.truth.slowdown, 1.0, 0.05);
}

TEST(GenerateTest, SlowdownGrowsWithFactor) {
  double prev = 1.0;
  for (double f : {1.0, 1.25, 1.5, 2.0, 3.0}) {
    const double s = generate(testing::slow_worker_config({2, 2, 2, 4}, {1, 0}, f, 0.0, 1)).truth.slowdown;
    if (f == 1.0) {
      EXPECT_EQ(s, 1.0);
    } else {
      EXPECT_GT(s, prev);
    }
    prev = s;
  }
}

TEST(GenerateTest, SeqlenJobCorrelatesForwardAndBackward) {
  const auto r = fb_correlation(generate(seqlen_config({4, 4, 2, 8}, 3)).trace);
  ASSERT_TRUE(r.has_value());
  EXPECT_GE(*r, 0.9);
}

TEST(GenerateTest, GcPauseLengthensOneStep) {
  GenConfig c;
  c.topology = {2, 2, 5, 4};
  const Generated clean = generate(c);
  Injection gc;
  gc.kind = Injection::Kind::GcPause;
  gc.interval_steps = 5;  // worker (1,1) has global rank 3: pauses when (s + 3) % 5 == 0
  gc.pause_us = 5000;
  gc.workers = {{1, 1}};
  c.injections.push_back(gc);
  const Generated g = generate(c);
  ASSERT_EQ(g.truth.gc_pauses.size(), 1u);
  EXPECT_EQ(g.truth.gc_pauses[0], (std::pair<WorkerId, int>{{1, 1}, 2}));

  const auto before = traced_step_durations(clean.trace), after = traced_step_durations(g.trace);
  for (std::size_t s = 0; s < before.size(); ++s) {
    if (s == 2) {
      EXPECT_GT(after[s], before[s] + 1000);
    } else {
      EXPECT_EQ(after[s], before[s]) << "step " << s;
    }
  }
}

TEST(GenerateTest, LaunchDelayIsTheOnlyUnreproducibleInjection) {
  GenConfig c;
  c.topology = {2, 1, 3, 2};
  Injection in;
  in.kind = Injection::Kind::LaunchDelay;
  in.delay_us = 100;
  c.injections.push_back(in);
  const Generated g = generate(c);
  EXPECT_EQ(g.truth.launch_delay_total, 100.0 * 3 * 2);
  EXPECT_GT(g.truth.jct, g.truth.no_injection_jct);
  EXPECT_EQ(WhatIf(g.trace).run(Scenario::original()).jct, g.truth.no_injection_jct);
}

TEST(SeqlenSampleTest, PackingExamples) {
  std::mt19937_64 rng(1);
  LengthDistribution full{LengthDistribution::Kind::Constant, 0, 0, 32768};
  for (const auto& mb : seqlen_sample(rng, full, 32768, 32768, 10)) EXPECT_EQ(mb, (std::vector<Tokens>{32768}));
  LengthDistribution quarter{LengthDistribution::Kind::Constant, 0, 0, 8192};
  const auto q = seqlen_sample(rng, quarter, 32768, 32768, 10);
  ASSERT_EQ(q.size(), 10u);
  for (const auto& mb : q) EXPECT_EQ(mb, std::vector<Tokens>(4, 8192));
  EXPECT_EQ(error_of([&] { seqlen_sample(rng, quarter, 32768, 1024, 1); }), Errc::InvalidConfig);
}

TEST(SeqlenSampleTest, LongTailVariesCost) {
  std::mt19937_64 rng(2);
  const auto mbs = seqlen_sample(rng, LengthDistribution{}, 32768, 32768, 1000);
  ASSERT_EQ(mbs.size(), 1000u);
  Cost lo = std::numeric_limits<Cost>::max(), hi = 0;
  for (const auto& mb : mbs) {
    Tokens sum = 0;
    for (Tokens s : mb) {
      EXPECT_GE(s, 1);
      EXPECT_LE(s, 32768);
      sum += s;
    }
    EXPECT_LE(sum, 32768);
    lo = std::min(lo, microbatch_cost(mb));
    hi = std::max(hi, microbatch_cost(mb));
  }
  EXPECT_GE(hi, 4 * lo);
}

TEST(ScheduleTest, StageOrders) {
  using P = std::pair<OpType, int>;
  constexpr OpType F = OpType::ForwardCompute, B = OpType::BackwardCompute;
  EXPECT_EQ(stage_order(PipelineSchedule::GPipe, 0, 2, 3),
            (std::vector<P>{{F, 0}, {F, 1}, {F, 2}, {B, 2}, {B, 1}, {B, 0}}));
  EXPECT_EQ(stage_order(PipelineSchedule::OneFOneB, 0, 4, 6),
            (std::vector<P>{{F, 0}, {F, 1}, {F, 2}, {F, 3}, {B, 0}, {F, 4}, {B, 1}, {F, 5}, {B, 2}, {B, 3},
                            {B, 4}, {B, 5}}));
  EXPECT_EQ(stage_order(PipelineSchedule::OneFOneB, 3, 4, 3),
            (std::vector<P>{{F, 0}, {B, 0}, {F, 1}, {B, 1}, {F, 2}, {B, 2}}));
  EXPECT_EQ(stage_order(PipelineSchedule::OneFOneB, 0, 8, 2), (std::vector<P>{{F, 0}, {F, 1}, {B, 0}, {B, 1}}));
}

TEST(ConfigTest, JsonRoundTrip) {
  const auto j = nlohmann::json::parse(R"({
    "dp_degree": 4, "pp_degree": 2, "num_steps": 3, "microbatches_per_step": 4,
    "schedule": "gpipe", "noise": 0.05, "seed": 17,
    "injections": [
      {"kind": "slow-worker", "pp": 1, "dp": 2, "factor": 1.5, "ops": ["compute", "grads-sync"]},
      {"kind": "last-stage", "fwd_factor": 2.07, "bwd_factor": 1.41},
      {"kind": "seqlen-driven", "distribution": {"type": "constant", "value": 4096}, "max_seq_len": 8192},
      {"kind": "gc-pause", "interval_steps": 3, "pause_us": 800, "workers": [[0, 1]]},
      {"kind": "comm-jitter", "op": "forward-send", "factor": 2, "probability": 0.1},
      {"kind": "launch-delay", "delay_us": 20}
    ]})");
  const GenConfig c = config_from_json(j);
  EXPECT_EQ(c.topology, (JobTopology{4, 2, 3, 4}));
  EXPECT_EQ(c.schedule, PipelineSchedule::GPipe);
  ASSERT_EQ(c.injections.size(), 6u);
  EXPECT_EQ(c.injections[0].ops,
            (std::vector<OpType>{OpType::ForwardCompute, OpType::BackwardCompute, OpType::GradsSync}));
  EXPECT_EQ(c.injections[2].capacity, 8192);
  EXPECT_NO_THROW(check_config(c));
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
}

TEST(ConfigTest, BadConfigsAreRejected) {
  auto bad = [](auto mutate) {
    GenConfig c = testing::slow_worker_config({2, 2, 2, 2}, {0, 0}, 1.5, 0.1, 1);
    mutate(c);
    return error_of([&] { generate(c); });
  };
  EXPECT_EQ(bad([](GenConfig& c) { c.topology.dp_degree = 0; }), Errc::InvalidConfig);
  EXPECT_EQ(bad([](GenConfig& c) { c.noise = 1.0; }), Errc::InvalidConfig);
  EXPECT_EQ(bad([](GenConfig& c) { c.injections[0].factor = 0.5; }), Errc::InvalidConfig);
  EXPECT_EQ(bad([](GenConfig& c) { c.injections[0].worker = {2, 0}; }), Errc::InvalidConfig);
  EXPECT_EQ(bad([](GenConfig& c) {
              c.injections[0].kind = Injection::Kind::CommJitter;
              c.injections[0].probability = 1.5;
            }),
            Errc::InvalidConfig);
  EXPECT_EQ(error_of([] { config_from_json(nlohmann::json{{"dp_degree", 1}}); }), Errc::InvalidConfig);
  EXPECT_EQ(error_of([] {
              config_from_json(nlohmann::json::parse(
                  R"({"dp_degree":1,"pp_degree":1,"num_steps":1,"microbatches_per_step":1,
                      "injections":[{"kind":"comm-jitter","op":"forward-compute","factor":2,"probability":1}]})"));
            }),
            Errc::InvalidConfig);
}

}  // namespace
}  // namespace straggler
