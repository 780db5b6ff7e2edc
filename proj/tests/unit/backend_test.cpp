// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "chunksched/error.hpp"
#include "chunksched/fixtures.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {
namespace {

CommSchedule pair_schedule(std::vector<int64_t> shape, Region src, Region dst,
                           bool accumulate, Direction dir = Direction::pull) {
  CommSchedule s = empty_schedule(2);
  s.tensors["X"] = {"X", std::move(shape), 2, true};
  s.owner_regions = {{full_region(s.tensors["X"])}, {full_region(s.tensors["X"])}};
  CommOp op;
  op.op = P2P{dir, 0, {src, Layout::row_major, ""}, {dst, Layout::row_major, ""},
              accumulate};
  s.plans[1].push_back(op);
  return s;
}

TEST(Profile, H100Defaults) {
  const BackendProfile p = h100_profile();
  const auto& ce = p.at(BackendKind::copy_engine);
  EXPECT_EQ(ce.peak_bw, 400);
  EXPECT_DOUBLE_EQ(ce.launch_latency, 2.5e-6);
  EXPECT_FALSE(ce.supports_collective_reduce);
  EXPECT_FALSE(ce.supports_strided);
  EXPECT_FALSE(ce.consumes_sms);
  EXPECT_FALSE(p.at(BackendKind::tma_specialized).supports_collective_reduce);
  EXPECT_TRUE(p.at(BackendKind::ldst_specialized).supports_collective_reduce);
  EXPECT_LT(p.at(BackendKind::ldst_colocated).peak_bw, ce.peak_bw);
  EXPECT_EQ(all_backends().size(), 5u);
}

TEST(Profile, JsonRoundTripAndFile) {
  const BackendProfile p = h100_profile();
  EXPECT_EQ(profile_from_json(profile_to_json(p)), p);
  EXPECT_EQ(load_profile(std::string(CHUNKSCHED_FIXTURE_DIR) + "/../../profiles/h100.json"), p);
  EXPECT_THROW(load_profile("/nonexistent/profile.json"), IoError);
}

TEST(Feasible, AccumulateOnCopyEngine) {
  const CommSchedule s = pair_schedule({64}, {"X", {0}, {32}}, {"X", {0}, {32}}, true,
                                       Direction::push);
  const Feasibility f = feasible(s.plans[1][0], s, BackendKind::copy_engine, h100_profile());
  EXPECT_FALSE(f.legal());
  EXPECT_EQ(f.reason, "no reduction support");
  EXPECT_TRUE(feasible(s.plans[1][0], s, BackendKind::ldst_specialized, h100_profile()).ok());
}

TEST(Feasible, LargeContiguousPull) {
  // 32 Mi elements of 2 bytes: 64 MiB.
  const CommSchedule s =
      pair_schedule({1 << 25}, {"X", {0}, {1 << 25}}, {"X", {0}, {1 << 25}}, false);
  EXPECT_TRUE(feasible(s.plans[1][0], s, BackendKind::copy_engine, h100_profile()).ok());
}

TEST(Feasible, StridedNeedsContiguousSplit) {
  const Region strided{"X", {0, 0}, {512, 512}};
  CommSchedule s = pair_schedule({1024, 1024}, strided, strided, false);
  EXPECT_FALSE(
      feasible(s.plans[1][0], s, BackendKind::copy_engine, h100_profile()).legal());
  // Row-wise pieces are contiguous and each one is accepted.
  const Chunk c{strided, Layout::row_major, ""};
  for (const Chunk& piece : split_contiguous(c, {1024, 1024})) {
    CommSchedule t = pair_schedule({1024, 1024}, piece.region, piece.region, false);
    EXPECT_TRUE(
        feasible(t.plans[1][0], t, BackendKind::copy_engine, h100_profile()).legal());
  }
}

TEST(Feasible, SmallTransfersAreInefficient) {
  const CommSchedule s = pair_schedule({2048}, {"X", {0}, {2048}}, {"X", {0}, {2048}}, false);
  const Feasibility f = feasible(s.plans[1][0], s, BackendKind::copy_engine, h100_profile());
  EXPECT_TRUE(f.legal());
  EXPECT_FALSE(f.ok());
}

TEST(Bandwidth, PointValues) {
  const BackendProfile p = h100_profile();
  // Launch time equals transfer time at 400e9 * 2.5e-6 bytes.
  EXPECT_NEAR(effective_bandwidth(1e6, BackendKind::copy_engine, 0, p), 200, 1e-9);
  const double mib = 1 << 20;
  EXPECT_NEAR(effective_bandwidth(mib, BackendKind::copy_engine, 0, p),
              mib / (2.5e-6 + mib / 400e9) / 1e9, 1e-9);
  EXPECT_NEAR(effective_bandwidth(1e18, BackendKind::copy_engine, 0, p), 400, 1e-3);
  EXPECT_DOUBLE_EQ(driver_cap(BackendKind::tma_specialized, 16, p), 300e9);
  EXPECT_LT(driver_cap(BackendKind::tma_specialized, 8, p), 300e9);
}

TEST(Bandwidth, MonotoneAndBoundedOnRandomProfiles) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    BackendProfile p = h100_profile();
    for (auto& [kind, c] : p.backends) {
      c.peak_bw = 100 + 500 * u(rng);
      c.launch_latency = 5e-6 * u(rng);
      c.per_sm_bw = 40 * u(rng);
      c.max_useful_sms = 1 + static_cast<int>(32 * u(rng));
    }
    for (BackendKind kind : all_backends()) {
      const int min_sms = is_specialized(kind) ? 1 : 0;
      double prev = 0;
      for (double bytes = 1; bytes < 1e12; bytes *= 3) {
        const double bw = effective_bandwidth(bytes, kind, 16, p);
        EXPECT_GE(bw, prev);
        EXPECT_LE(bw, p.at(kind).peak_bw + 1e-9);
        prev = bw;
      }
      prev = 0;
      for (int sms = min_sms; sms <= 64; ++sms) {
        const double bw = effective_bandwidth(1e8, kind, sms, p);
        EXPECT_GE(bw, prev);
        prev = bw;
      }
    }
  }
}

Workload small_rs() {
  GemmShape g;
  g.m = 512, g.n = 256, g.k = 64;
  return gemm_rs(4, g);
}

TEST(Realize, CopyEngineOnly) {
  const Workload w = ag_gemm(4, GemmShape{});
  const DeviceProgram p = realize(
      w, plan_workload(w, {}),
      uniform_assignment(w.schedule, BackendKind::copy_engine, BackendKind::ldst_colocated),
      h100_profile(), {});
  for (const RankProgram& r : p.ranks) {
    EXPECT_EQ(r.comm.size(), 1u);
    EXPECT_EQ(r.compute_sms, 132);
    EXPECT_EQ(r.comm_sms, 0);
  }
}

TEST(Realize, ColocatedHasNoCommStreams) {
  const Workload w = small_rs();
  const DeviceProgram p = realize(
      w, plan_workload(w, {}),
      uniform_assignment(w.schedule, BackendKind::ldst_colocated, BackendKind::ldst_colocated),
      h100_profile(), {});
  for (const RankProgram& r : p.ranks) {
    EXPECT_TRUE(r.comm.empty());
    int transfers = 0;
    for (const StreamItem& it : r.compute.items) transfers += it.kind == ItemKind::transfer;
    EXPECT_GT(transfers, 0);
  }
}

TEST(Realize, MixedAccounting) {
  // Reduce-scatter then all-gather: both op classes appear.
  GemmShape g;
  g.m = 512, g.n = 256, g.k = 64;
  const Workload w = gemm_ar(4, g);
  RealizeOptions opt;
  opt.comm_sms = 16;
  const DeviceProgram p = realize(
      w, plan_workload(w, {}),
      uniform_assignment(w.schedule, BackendKind::copy_engine, BackendKind::ldst_specialized),
      h100_profile(), opt);
  for (const RankProgram& r : p.ranks) {
    EXPECT_EQ(r.comm.size(), 2u);
    EXPECT_EQ(r.compute_sms, 116);
    EXPECT_EQ(r.comm_sms, 16);
  }
}

TEST(Realize, RejectsIllegalAndMisallocated) {
  const Workload w = small_rs();
  const Plan plan = plan_workload(w, {});
  EXPECT_THROW(realize(w, plan,
                       uniform_assignment(w.schedule, BackendKind::copy_engine,
                                          BackendKind::copy_engine),
                       h100_profile(), {}),
               Error);
  // Specialized backends need comm SMs; copy engines must not get any.
  EXPECT_THROW(realize(w, plan,
                       uniform_assignment(w.schedule, BackendKind::copy_engine,
                                          BackendKind::ldst_specialized),
                       h100_profile(), {}),
               Error);
}

TEST(Realize, ProgramJsonRoundTrip) {
  const Workload w = small_rs();
  RealizeOptions opt;
  opt.comm_sms = 8;
  const DeviceProgram p = realize(
      w, plan_workload(w, {}),
      uniform_assignment(w.schedule, BackendKind::copy_engine, BackendKind::ldst_specialized),
      h100_profile(), opt);
  const Json j = program_to_json(p);
  EXPECT_EQ(program_to_json(program_from_json(j)).dump(), j.dump());
}

TEST(Realize, EveryWaitMatters) {
  GemmShape g;
  g.m = 1024, g.n = 256, g.k = 256;
  const Workload w = ag_gemm(4, g, "ring_allgather", 2);
  RealizeOptions opt;
  opt.device_sms = 8;
  const DeviceProgram p = realize(
      w, plan_workload(w, {}),
      uniform_assignment(w.schedule, BackendKind::copy_engine, BackendKind::ldst_colocated),
      h100_profile(), opt);
  const auto sites = planned_waits(p);
  ASSERT_FALSE(sites.empty());
  for (const WaitSite& site : sites) {
    const DeviceProgram q = drop_wait(p, site);
    bool hit = false;
    for (uint64_t seed = 0; seed < 100 && !hit; ++seed) {
      SimConfig cfg;
      cfg.sms_per_device = 8;
      cfg.payload = PayloadMode::off;
      cfg.jitter.enabled = true;
      cfg.jitter.seed = seed;
      cfg.jitter.straggler = 8;
      hit = !simulate(q, cfg).violations.empty();
    }
    EXPECT_TRUE(hit) << site.signal;
  }
}

}  // namespace
}  // namespace chunksched
