// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <gtest/gtest.h>

#include "chunksched/error.hpp"
#include "chunksched/fixtures.hpp"
#include "chunksched/lowering.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {
namespace {

DeviceProgram build(const Workload& w, BackendKind move = BackendKind::copy_engine,
                    BackendKind reduce = BackendKind::ldst_colocated,
                    RealizeOptions opt = {}) {
  return realize(w, plan_workload(w, {}), uniform_assignment(w.schedule, move, reduce),
                 h100_profile(), opt);
}

Workload single_rank_gemm() {
  GemmShape g;
  g.m = g.n = 128 * 32;
  Workload w;
  w.program = gemm_program(g);
  w.schedule = empty_schedule(1);
  return w;
}

TEST(Simulate, SingleRankWaves) {
  const Workload w = single_rank_gemm();
  SimConfig cfg;
  cfg.launch_overhead = 0;
  RealizeOptions opt;
  opt.launch_overhead = 0;
  const SimResult r = simulate(build(w, BackendKind::copy_engine,
                                     BackendKind::ldst_colocated, opt),
                               cfg);
  const double tile = w.program->flops_per_tile() / cfg.flops_per_sm;
  EXPECT_NEAR(r.timeline.makespan, 8 * tile, 1e-15);
  EXPECT_NEAR(r.timeline.compute_utilization, 1024.0 / 1056.0, 1e-9);
  EXPECT_TRUE(r.violations.empty());

  // With a launch in front, the waves shift by exactly that overhead.
  const SimResult s = simulate(build(w), SimConfig{});
  EXPECT_NEAR(s.timeline.makespan, 5e-6 + 8 * tile, 1e-15);
}

TEST(Simulate, RingMatchesOracle) {
  GemmShape g;
  g.m = 512, g.n = 256, g.k = 64;
  const Workload w = ag_gemm(4, g);
  const Buffers in = make_inputs(w, 8);
  SimConfig cfg;
  cfg.payload = PayloadMode::on;
  const SimResult r = simulate(build(w), cfg, in);
  EXPECT_TRUE(r.violations.empty());
  ASSERT_TRUE(r.buffers.has_value());
  const ReferenceResult ref = reference_execute(w, in);
  EXPECT_FALSE(first_difference(*r.buffers, ref.buffers));
  // Every rank ends with the full A: the concatenation of the shards.
  for (int rank = 0; rank < 4; ++rank) {
    for (int q = 0; q < 4; ++q) {
      const Region shard{"A", {128 * q, 0}, {128, 64}};
      for (int64_t i : flat_indices(shard, Layout::row_major, {512, 64})) {
        ASSERT_EQ((*r.buffers)[rank].at("A")[i], in[q].at("A")[i]);
      }
    }
  }
}

TEST(Simulate, DroppedWaitIsCaught) {
  GemmShape g;
  g.m = 1024, g.n = 256, g.k = 256;
  const Workload w = ag_gemm(4, g);
  const DeviceProgram p = build(w);
  const auto sites = planned_waits(p);
  ASSERT_FALSE(sites.empty());
  const DeviceProgram q = drop_wait(p, sites[0]);
  int hits = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    SimConfig cfg;
    cfg.payload = PayloadMode::off;
    cfg.jitter.enabled = true;
    cfg.jitter.seed = seed;
    cfg.jitter.straggler = 8;
    hits += !simulate(q, cfg).violations.empty();
    EXPECT_TRUE(simulate(p, cfg).violations.empty());
  }
  EXPECT_GE(hits, 1);
}

TEST(Simulate, CausalExclusiveAndBounded) {
  GemmShape g;
  g.m = 1024, g.n = 512, g.k = 256;
  const SimConfig base;
  const std::vector<std::pair<Workload, BackendKind>> cases = {
      {ag_gemm(4, g, "allgather_2d_swizzle", 2), BackendKind::ldst_specialized},
      {gemm_rs(4, g), BackendKind::copy_engine},
      {gemm_ar(4, g, 2), BackendKind::copy_engine}};
  for (const auto& [w, move] : cases) {
    RealizeOptions opt;
    opt.comm_sms = 16;
    const DeviceProgram p = build(w, move, BackendKind::ldst_specialized, opt);
    for (uint64_t seed = 0; seed < 5; ++seed) {
      SimConfig cfg;
      cfg.payload = PayloadMode::off;
      cfg.jitter.enabled = seed > 0;
      cfg.jitter.seed = seed;
      const SimResult r = simulate(p, cfg);
      EXPECT_TRUE(check_timeline(r.timeline).empty());
      EXPECT_TRUE(r.violations.empty());
      if (seed > 0) continue;
      // Jitter off: the sanity lower bound holds.
      const double compute = w.program->tile_count() * w.program->flops_per_tile() /
                             (base.flops_per_sm * p.ranks[0].compute_sms);
      double bytes = 0;
      for (const OpRef& o : w.schedule.all_ops()) {
        bytes += op_bytes(w.schedule.op(o), w.schedule);
      }
      const double wire =
          bytes / (w.schedule.world_size * std::min(base.egress_bw, base.ingress_bw));
      EXPECT_GE(r.timeline.makespan, std::max(compute, wire));
    }
  }
}

TEST(Simulate, Deterministic) {
  GemmShape g;
  g.m = 512, g.n = 256, g.k = 64;
  const Workload w = gemm_ar(4, g);
  RealizeOptions opt;
  opt.comm_sms = 16;
  const DeviceProgram p =
      build(w, BackendKind::copy_engine, BackendKind::ldst_specialized, opt);
  SimConfig cfg;
  cfg.payload = PayloadMode::on;
  cfg.jitter.enabled = true;
  cfg.jitter.seed = 99;
  const Buffers in = make_inputs(w, 1);
  const SimResult a = simulate(p, cfg, in), b = simulate(p, cfg, in);
  EXPECT_EQ(trace_json(a.timeline), trace_json(b.timeline));
  EXPECT_EQ(a.timeline.events, b.timeline.events);
  EXPECT_FALSE(first_difference(*a.buffers, *b.buffers));
}

TEST(Simulate, DirectCollectivesMatchOracle) {
  const TensorSpec t{"X", {64, 16}, 4, true};
  const std::vector<std::pair<Placement, Placement>> cases = {
      {{Placement::Kind::sharded, 0}, {Placement::Kind::replicated, -1}},
      {{Placement::Kind::partial, -1}, {Placement::Kind::sharded, 0}},
      {{Placement::Kind::partial, -1}, {Placement::Kind::replicated, -1}},
      {{Placement::Kind::sharded, 0}, {Placement::Kind::sharded, 1}}};
  for (const auto& [from, to] : cases) {
    Workload w;
    w.schedule = emit_steps(parse_partition_to_steps(t, from, to), 4, {{"X", t}},
                            LoweringPath::direct);
    const Buffers in = make_inputs(w, 3);
    SimConfig cfg;
    cfg.payload = PayloadMode::on;
    RealizeOptions opt;
    opt.comm_sms = 16;
    const SimResult r =
        simulate(build(w, BackendKind::ldst_specialized, BackendKind::ldst_specialized, opt),
                 cfg, in);
    EXPECT_TRUE(r.violations.empty());
    EXPECT_FALSE(first_difference(*r.buffers, reference_execute(w, in).buffers));
  }
}

TEST(Reference, AllReduceIsElementwiseSum) {
  for (int world : {2, 4}) {
    const Workload w = comm_only("partition_allreduce", world, 32, 8);
    const Buffers in = make_inputs(w, 12);
    const ReferenceResult r = reference_execute(w, in);
    EXPECT_TRUE(r.violations.empty());
    std::vector<double> sum(32 * 8, 0.0);
    for (int q = 0; q < world; ++q) {
      for (size_t i = 0; i < sum.size(); ++i) sum[i] += in[q].at("X")[i];
    }
    for (int q = 0; q < world; ++q) EXPECT_EQ(r.buffers[q].at("X"), sum);
  }
}

TEST(Reference, EmptyScheduleKeepsInputs) {
  Workload w;
  w.schedule = empty_schedule(2);
  w.schedule.tensors["X"] = {"X", {8}, 2, true};
  w.schedule.owner_regions = {{{"X", {0}, {8}}}, {{"X", {0}, {8}}}};
  const Buffers in = make_inputs(w, 5);
  EXPECT_FALSE(first_difference(reference_execute(w, in).buffers, in));
}

TEST(Reference, TwoLevelGatherEqualsRing) {
  const Workload ring = comm_only("ring_allgather", 4, 64, 8);
  const Workload two = comm_only("allgather_2d_swizzle", 4, 64, 8);
  const Buffers in = make_inputs(ring, 6);
  EXPECT_FALSE(first_difference(reference_execute(ring, in).buffers,
                                reference_execute(two, in).buffers));
}

TEST(Overlap, SingleSplitDiffersByOneLaunch) {
  const Workload w = single_rank_gemm();
  SimConfig cfg;
  cfg.payload = PayloadMode::off;
  const OverlapReport r = compare_overlap_modes(
      w, plan_workload(w, {}),
      uniform_assignment(w.schedule, BackendKind::copy_engine, BackendKind::ldst_colocated),
      h100_profile(), cfg);
  EXPECT_NEAR(r.partitioned_makespan - r.fused_makespan, cfg.launch_overhead, 1e-15);
}

TEST(Overlap, SplitsFavourFusedAndCostUtilization) {
  GemmShape g;
  g.m = 4096, g.n = 2048, g.k = 4096;
  double prev_util = 2;
  for (int split : {1, 2, 4, 8}) {
    Workload w = ag_gemm(4, g);
    w.schedule = split_schedule(w.schedule, split, 0);
    SimConfig cfg;
    cfg.payload = PayloadMode::off;
    const OverlapReport r = compare_overlap_modes(
        w, plan_workload(w, {}),
        uniform_assignment(w.schedule, BackendKind::copy_engine,
                           BackendKind::ldst_colocated),
        h100_profile(), cfg);
    if (split == 4) {
      EXPECT_LT(r.fused_makespan, r.partitioned_makespan);
    }
    EXPECT_LT(r.partitioned_utilization, prev_util) << split;
    prev_util = r.partitioned_utilization;
  }
}

TEST(Trace, EmptyTimeline) {
  const Timeline t;
  EXPECT_TRUE(parse_trace_json(trace_json(t)).empty());
}

TEST(Trace, ThreeEvents) {
  Timeline t;
  t.events = {{0, "compute", 0, 1e-6, "tile 0", {}},
              {0, "copy_engine", 5e-7, 2.5e-6, "op 1.0", {"s"}},
              {1, "compute", 1e-6, 3e-6, "tile 1", {}}};
  t.makespan = 3e-6;
  const std::string text = trace_json(t);
  size_t n = 0;
  const Json doc = Json::parse(text);
  for (const Json& e : doc["traceEvents"]) n += e["ph"] == "X";
  EXPECT_EQ(n, 3u);
  const auto events = parse_trace_json(text);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_DOUBLE_EQ(events[1].ts, 0.5);
  EXPECT_DOUBLE_EQ(events[1].dur, 2.0);
}

TEST(Trace, RoundTrip) {
  GemmShape g;
  g.m = 512, g.n = 256, g.k = 64;
  const Workload w = ag_gemm(4, g);
  SimConfig cfg;
  cfg.jitter.enabled = true;
  cfg.jitter.seed = 4;
  const SimResult r = simulate(build(w), cfg);
  const auto events = trace_events(r.timeline);
  EXPECT_EQ(parse_trace_json(trace_json(r.timeline)), events);
  const Timeline back = timeline_from_trace(events);
  EXPECT_EQ(trace_json(back), trace_json(r.timeline));
  EXPECT_EQ(trace_csv(back), trace_csv(r.timeline));
}

}  // namespace
}  // namespace chunksched
