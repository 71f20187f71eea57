// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "support.hpp"

namespace straggler {
namespace {

struct Job {
  Trace trace;
  WhatIf wi;
  Duration T, T_ideal;

  explicit Job(Trace t)
      : trace(std::move(t)),
        wi(trace),
        T(wi.run(Scenario::original()).jct),
        T_ideal(wi.run(Scenario::fix_all()).jct) {}
};

GenConfig seqlen_config(JobTopology topo, double noise, std::uint64_t seed) {
  GenConfig c;
  c.topology = topo;
  c.noise = noise;
  c.seed = seed;
  Injection in;
  in.kind = Injection::Kind::SeqlenDriven;
  c.injections.push_back(in);
  return c;
}

GenConfig last_stage_config(JobTopology topo, double noise, std::uint64_t seed) {
  GenConfig c;
  c.topology = topo;
  c.noise = noise;
  c.seed = seed;
  Injection in;
  in.kind = Injection::Kind::LastStage;
  in.fwd_factor = 2.07;
  in.bwd_factor = 1.41;
  c.injections.push_back(in);
  return c;
}

WorkerId argmax(const std::map<WorkerId, double>& m) {
  return std::max_element(m.begin(), m.end(), [](const auto& a, const auto& b) { return a.second < b.second; })
      ->first;
}

TEST(WorkerSlowdownTest, NoInjectionIsOneEverywhere) {
  const Job job(testing::uniform_trace({3, 3, 2, 3}));
  for (const auto& [w, s] : approx_worker_slowdowns(job.wi, job.T_ideal)) EXPECT_EQ(s, 1.0) << w.str();
}

TEST(WorkerSlowdownTest, InjectedWorkerIsStrictMax) {
  const Job job(generate(testing::slow_worker_config({4, 3, 2, 4}, {2, 1}, 1.6, 0.0, 2)).trace);
  const auto s = approx_worker_slowdowns(job.trace, job.wi.graph());
  for (const auto& [w, v] : s) {
    if (!(w == WorkerId{2, 1})) {
      EXPECT_LT(v, s.at({2, 1})) << w.str();
    }
  }
}

TEST(WorkerSlowdownTest, SweepUsesDpPlusPpSimulations) {
  const Job job(generate(testing::slow_worker_config({5, 3, 2, 3}, {0, 4}, 1.5, 0.05, 6)).trace);
  const std::size_t before = job.wi.runs();
  const RankSweep sweep = rank_sweep(job.wi, job.T_ideal, 2);
  EXPECT_EQ(sweep.simulations, 8u);
  EXPECT_EQ(job.wi.runs() - before, 8u);
  EXPECT_EQ(sweep.worker_slowdown.size(), 15u);
}

TEST(WorkerSlowdownTest, ApproximationAgreesWithExhaustiveTop1) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    const JobTopology topo{2 + trial % 3, 2 + (trial / 3) % 3, 2, 4};
    const WorkerId w{static_cast<int>(rng() % topo.pp_degree), static_cast<int>(rng() % topo.dp_degree)};
    const Job job(generate(testing::slow_worker_config(topo, w, 1.5, 0.05, rng())).trace);
    const auto approx = approx_worker_slowdowns(job.wi, job.T_ideal);
    const auto exact = exact_worker_slowdowns(job.wi, job.T_ideal);
    EXPECT_EQ(argmax(approx), argmax(exact));
    EXPECT_EQ(argmax(approx), w);
  }
}

TEST(WorkerSlowdownTest, InjectedWorkerRanksFirstUnderNoise) {
  std::mt19937_64 rng(99);
  int hits = 0;
  const int trials = 60;
  for (int trial = 0; trial < trials; ++trial) {
    const JobTopology topo{2 + static_cast<int>(rng() % 3), 2 + static_cast<int>(rng() % 3), 2, 4};
    const WorkerId w{static_cast<int>(rng() % topo.pp_degree), static_cast<int>(rng() % topo.dp_degree)};
    const double factor = 1.3 + 0.7 * static_cast<double>(rng() % 1000) / 1000;
    const Job job(generate(testing::slow_worker_config(topo, w, factor, 0.05, rng())).trace);
    hits += argmax(approx_worker_slowdowns(job.wi, job.T_ideal)) == w;
  }
  EXPECT_GE(hits, trials * 95 / 100);
}

TEST(TopWorkersTest, CeilAndTies) {
  std::map<WorkerId, double> s;
  for (int p = 0; p < 8; ++p)
    for (int d = 0; d < 8; ++d) s[{p, d}] = 1.0;
  s[{3, 3}] = 1.5;
  EXPECT_EQ(top_workers(s), (std::vector<WorkerId>{{0, 0}, {3, 3}}));
  std::map<WorkerId, double> small = {{{0, 0}, 1.0}, {{0, 1}, 1.2}};
  EXPECT_EQ(top_workers(small), (std::vector<WorkerId>{{0, 1}}));
  std::map<WorkerId, double> hundred;
  for (int d = 0; d < 100; ++d) hundred[{0, d}] = 1.0 + d;
  EXPECT_EQ(top_workers(hundred).size(), 3u);
}

TEST(MachineIssueTest, OneSlowWorkerOfSixtyFour) {
  const Job job(generate(testing::slow_worker_config({8, 8, 2, 8}, {5, 2}, 2.0, 0.0, 1)).trace);
  const auto top = top_workers(approx_worker_slowdowns(job.wi, job.T_ideal));
  EXPECT_NE(std::find(top.begin(), top.end(), WorkerId{5, 2}), top.end());
  // Noise-free: the other workers sit below the inflated mean, so fixing the
  // suspects lands at or under T_ideal and M_W >= 1.
  const double mw = machine_issue_score(job.wi, top, job.T, job.T_ideal);
  EXPECT_GE(mw, 1.0);
  EXPECT_NEAR(mw, 1.0, 0.05);
}

TEST(MachineIssueTest, SpreadSlowdownScoresLow) {
  const Job job(generate(seqlen_config({8, 4, 3, 8}, 0.05, 8)).trace);
  const auto top = top_workers(approx_worker_slowdowns(job.wi, job.T_ideal));
  EXPECT_LT(machine_issue_score(job.wi, top, job.T, job.T_ideal), 0.2);
}

TEST(MachineIssueTest, FixingEveryWorkerRecoversEverything) {
  const Job job(generate(testing::slow_worker_config({3, 2, 2, 3}, {1, 1}, 1.8, 0.1, 4)).trace);
  std::vector<WorkerId> all;
  for (int p = 0; p < 2; ++p)
    for (int d = 0; d < 3; ++d) all.push_back({p, d});
  EXPECT_EQ(machine_issue_score(job.wi, all, job.T, job.T_ideal), 1.0);
}

TEST(LastStageTest, NoPipelineScoresZero) {
  const Job job(generate(testing::slow_worker_config({4, 1, 2, 2}, {0, 0}, 2.0, 0.0, 1)).trace);
  EXPECT_EQ(last_stage_score(job.wi, job.T, job.T_ideal), 0.0);
}

TEST(LastStageTest, LossLayerRatiosCrossThreshold) {
  const Job job(generate(last_stage_config({2, 4, 2, 8}, 0.05, 3)).trace);
  EXPECT_GE(last_stage_score(job.wi, job.T, job.T_ideal), 0.5);
}

TEST(LastStageTest, FirstStageSlowdownScoresNearZero) {
  GenConfig c;
  c.topology = {2, 4, 2, 8};
  for (int d = 0; d < 2; ++d) {
    Injection in;
    in.kind = Injection::Kind::SlowWorker;
    in.worker = {0, d};
    in.factor = 1.8;
    c.injections.push_back(in);
  }
  const Job job(generate(c).trace);
  // Fixing the untouched last stage raises it to the inflated mean: M_S <= 0.
  const double ms = last_stage_score(job.wi, job.T, job.T_ideal);
  EXPECT_LE(ms, 0.0);
  EXPECT_GT(ms, -0.25);
}

// Overwrites compute durations on the probe stage; timestamps become
// inconsistent but only durations are read.
void set_compute(Trace& t, const std::function<std::pair<Duration, Duration>(int)>& f) {
  int i = 0;
  std::map<OpKey, int> index;
  for (OpRecord& r : t.records)
    if (r.op == OpType::ForwardCompute) index[r.key()] = i++;
  for (OpRecord& r : t.records) {
    if (!is_compute(r.op)) continue;
    OpKey k = r.key();
    k.op = OpType::ForwardCompute;
    const auto [fwd, bwd] = f(index.at(k));
    r.end = r.start + static_cast<Timestamp>(r.op == OpType::ForwardCompute ? fwd : bwd);
  }
}

TEST(FbCorrelationTest, ProportionalBackwardIsPerfect) {
  Trace t = testing::uniform_trace({2, 1, 2, 4});
  set_compute(t, [](int i) { return std::make_pair(10.0 + 7 * i, 2 * (10.0 + 7 * i)); });
  ASSERT_TRUE(fb_correlation(t).has_value());
  EXPECT_NEAR(*fb_correlation(t), 1.0, 1e-12);
}

TEST(FbCorrelationTest, ConstantDurationsHaveNoCorrelation) {
  EXPECT_FALSE(fb_correlation(testing::uniform_trace({2, 2, 2, 2})).has_value());
}

TEST(FbCorrelationTest, TooFewPairs) {
  try {
    fb_correlation(testing::minimal_trace());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientSamples);
  }
}

TEST(FbCorrelationTest, SeqlenDrivenIsHighIidNoiseIsLow) {
  EXPECT_GE(*fb_correlation(generate(seqlen_config({4, 3, 2, 8}, 0.05, 1)).trace), 0.9);
  GenConfig iid;
  iid.topology = {4, 3, 4, 8};
  iid.noise = 0.2;
  iid.seed = 1;
  EXPECT_LT(*fb_correlation(generate(iid).trace), 0.5);
}

TEST(FbCorrelationTest, ProbeStage) {
  EXPECT_EQ(probe_stage({1, 1, 1, 1}), 0);
  EXPECT_EQ(probe_stage({1, 2, 1, 1}), 0);
  EXPECT_EQ(probe_stage({1, 3, 1, 1}), 1);
}

TEST(FbCorrelationTest, ScaleInvariant) {
  Trace t = generate(seqlen_config({2, 1, 2, 6}, 0.05, 4)).trace;
  const double r = *fb_correlation(t);
  Trace scaled = t;
  for (OpRecord& rec : scaled.records) {
    const Timestamp d = rec.end - rec.start;
    if (rec.op == OpType::ForwardCompute) rec.end = rec.start + 3 * d;
    if (rec.op == OpType::BackwardCompute) rec.end = rec.start + 5 * d;
  }
  EXPECT_NEAR(*fb_correlation(scaled), r, 1e-12);
}

RootCauseReport report_for(const Job& job) {
  RootCauseReport rc;
  rc.worker_slowdowns = approx_worker_slowdowns(job.wi, job.T_ideal);
  rc.top_worker_set = top_workers(rc.worker_slowdowns);
  rc.m_w = machine_issue_score(job.wi, rc.top_worker_set, job.T, job.T_ideal);
  rc.m_s = last_stage_score(job.wi, job.T, job.T_ideal);
  rc.fb_correlation = fb_correlation(job.trace);
  return rc;
}

TEST(ClassifyTest, SlowWorkerIsMachineIssue) {
  const Job job(generate(testing::slow_worker_config({4, 4, 2, 4}, {0, 2}, 2.0, 0.05, 5)).trace);
  EXPECT_EQ(classify({}, report_for(job)), std::set<Label>{Label::MachineIssue});
}

TEST(ClassifyTest, LossLayerIsStageImbalance) {
  const Job job(generate(last_stage_config({4, 4, 2, 8}, 0.05, 5)).trace);
  EXPECT_EQ(classify({}, report_for(job)), std::set<Label>{Label::StageImbalance});
}

TEST(ClassifyTest, NothingFires) {
  RootCauseReport rc;
  rc.m_w = 0.5;
  rc.m_s = 0.49;
  rc.fb_correlation = 0.89;
  EXPECT_EQ(classify({}, rc), std::set<Label>{Label::Unclassified});
  rc.m_s = 0.5;
  rc.fb_correlation = 0.9;
  EXPECT_EQ(classify({}, rc), (std::set<Label>{Label::StageImbalance, Label::SeqlenImbalance}));
}

TEST(RootCauseJsonTest, RoundTrip) {
  RootCauseReport rc;
  rc.worker_slowdowns = {{{0, 0}, 1.0}, {{1, 0}, 1.3}};
  rc.top_worker_set = {{1, 0}};
  rc.m_w = 0.8;
  rc.m_s = 0.1;
  rc.labels = {Label::MachineIssue};
  const RootCauseReport r = rootcause_from_json(nlohmann::json::parse(to_json(rc).dump()));
  EXPECT_EQ(r.worker_slowdowns, rc.worker_slowdowns);
  EXPECT_EQ(r.top_worker_set, rc.top_worker_set);
  EXPECT_EQ(r.labels, rc.labels);
  EXPECT_FALSE(r.fb_correlation.has_value());
}

}  // namespace
}  // namespace straggler
