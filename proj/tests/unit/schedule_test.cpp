// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>

#include <gtest/gtest.h>

#include "chunksched/error.hpp"
#include "chunksched/fixtures.hpp"
#include "chunksched/schedule_json.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {
namespace {

Chunk c1(int64_t off, int64_t size) {
  return {{"X", {off}, {size}}, Layout::row_major, ""};
}

CommSchedule two_rank_1d() {
  CommSchedule s = empty_schedule(2);
  s.tensors["X"] = {"X", {512}, 2, true};
  s.owner_regions = {{{"X", {0}, {256}}}, {{"X", {256}, {256}}}};
  return s;
}

CommOp push(int peer, Chunk src, Chunk dst, std::vector<OpRef> deps = {}) {
  CommOp op;
  op.op = P2P{Direction::push, peer, std::move(src), std::move(dst), false};
  op.deps = std::move(deps);
  return op;
}

// Permutation of every op that keeps per-rank order and every dependency.
bool respects(const CommSchedule& s, const std::vector<OpRef>& order) {
  std::map<OpRef, size_t> pos;
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  if (pos.size() != order.size() || order.size() != s.op_count()) return false;
  for (const OpRef& o : s.all_ops()) {
    if (!pos.count(o)) return false;
    if (o.index > 0 && pos[{o.rank, o.index - 1}] > pos[o]) return false;
    for (const OpRef& d : s.op(o).deps) {
      if (pos.at(d) > pos[o]) return false;
    }
  }
  return true;
}

TEST(Validate, EmptyPlanIsValid) {
  EXPECT_TRUE(validate_schedule(empty_schedule(1)).ok());
}

TEST(Validate, P2PVolumeMismatch) {
  CommSchedule s = two_rank_1d();
  CommOp op;
  op.op = P2P{Direction::pull, 0, c1(0, 128), c1(0, 256), false};
  s.plans[1].push_back(op);
  const ValidationReport r = validate_schedule(s);
  ASSERT_TRUE(r.has("p2p_volume_mismatch"));
  bool named = false;
  for (const Violation& v : r.violations) {
    named = named || v.message.find("P2P volume mismatch") != std::string::npos;
  }
  EXPECT_TRUE(named);
}

TEST(Validate, DependenceCycle) {
  CommSchedule s = two_rank_1d();
  s.plans[0].push_back(push(1, c1(0, 128), c1(0, 128), {{1, 0}}));
  s.plans[1].push_back(push(0, c1(256, 128), c1(256, 128), {{0, 0}}));
  const ValidationReport r = validate_schedule(s);
  EXPECT_TRUE(r.has("dependence_cycle"));
  EXPECT_THROW(global_order(s), Error);
}

TEST(Validate, StructuralProblems) {
  CommSchedule s = two_rank_1d();
  s.plans[0].push_back(push(5, c1(0, 128), c1(0, 128)));
  s.plans[1].push_back(push(0, c1(500, 128), c1(0, 128), {{0, 3}}));
  const ValidationReport r = validate_schedule(s);
  EXPECT_TRUE(r.has("invalid_peer"));
  EXPECT_TRUE(r.has("region_out_of_bounds"));
  EXPECT_TRUE(r.has("dangling_dependency"));

  CommSchedule bad = two_rank_1d();
  bad.plans.pop_back();
  EXPECT_TRUE(validate_schedule(bad).has("plan_count"));
}

TEST(GlobalOrder, SingleOp) {
  CommSchedule s = two_rank_1d();
  s.world_size = 1;
  s.plans = {{push(0, c1(0, 8), c1(8, 8))}};
  s.owner_regions = {{{"X", {0}, {512}}}};
  EXPECT_EQ(global_order(s), (std::vector<OpRef>{{0, 0}}));
}

TEST(GlobalOrder, RingStepsPrecedeSuccessors) {
  const CommSchedule s = make_template(
      "ring_allgather", template_params("ring_allgather", 4,
                                        {"A", {4096, 64}, 2, true}, 0));
  const auto order = global_order(s);
  ASSERT_TRUE(respects(s, order));
  std::map<OpRef, size_t> pos;
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (int r = 0; r < 4; ++r) {
    ASSERT_EQ(s.plans[r].size(), 3u);
    for (int k = 0; k + 1 < 3; ++k) {
      EXPECT_LT(pos[(OpRef{r, k})], pos[(OpRef{r, k + 1})]);
      // The next rank forwards what this step delivered.
      EXPECT_LT(pos[(OpRef{r, k})], pos[(OpRef{(r + 1) % 4, k + 1})]);
    }
  }
}

TEST(GlobalOrder, CheckerAcceptsEveryInterleaving) {
  CommSchedule s = two_rank_1d();
  s.plans[0] = {push(1, c1(0, 64), c1(0, 64)), push(1, c1(64, 64), c1(64, 64))};
  s.plans[1] = {push(0, c1(256, 64), c1(256, 64)),
                push(0, c1(320, 64), c1(320, 64))};
  EXPECT_TRUE(respects(s, global_order(s)));
  // Choose which two of the four slots hold rank 0's ops.
  int accepted = 0;
  for (int mask = 0; mask < 16; ++mask) {
    if (__builtin_popcount(mask) != 2) continue;
    std::vector<OpRef> order;
    int next[2] = {0, 0};
    for (int slot = 0; slot < 4; ++slot) {
      const int rank = (mask >> slot) & 1 ? 0 : 1;
      order.push_back({rank, next[rank]++});
    }
    EXPECT_TRUE(respects(s, order));
    ++accepted;
  }
  EXPECT_EQ(accepted, 6);
  EXPECT_FALSE(respects(s, {{0, 1}, {0, 0}, {1, 0}, {1, 1}}));
}

TEST(GlobalOrder, PermutationRespectingEveryEdge) {
  for (const std::string& name : template_names()) {
    for (int w : {2, 4, 8}) {
      const CommSchedule s = make_template(
          name, template_params(name, w, {"A", {64, 8}, 2, true}, 0, 2));
      EXPECT_TRUE(respects(s, global_order(s))) << name << " W=" << w;
    }
  }
}

TEST(Validate, AcceptedSchedulesNeverDeadlock) {
  for (const std::string& name : template_names()) {
    for (int w : {2, 4, 8}) {
      const Workload wl = comm_only(name, w, 8 * w, 4, 2);
      ASSERT_TRUE(validate_schedule(wl.schedule).ok()) << name;
      const Plan plan = plan_workload(wl, {});
      const DeviceProgram p = realize(
          wl, plan,
          uniform_assignment(wl.schedule, BackendKind::copy_engine,
                             BackendKind::ldst_colocated),
          h100_profile(), {});
      for (uint64_t seed = 0; seed < 20; ++seed) {
        SimConfig cfg;
        cfg.payload = PayloadMode::off;
        cfg.jitter.enabled = true;
        cfg.jitter.seed = seed;
        cfg.jitter.max_delay = 20e-6;
        EXPECT_NO_THROW(simulate(p, cfg)) << name << " W=" << w;
      }
    }
  }
}

TEST(SplitSchedule, PreservesPipelining) {
  const CommSchedule s = make_template(
      "ring_allgather", template_params("ring_allgather", 4,
                                        {"A", {64, 8}, 2, true}, 0));
  const CommSchedule t = split_schedule(s, 2, 0);
  EXPECT_TRUE(validate_schedule(t).ok());
  EXPECT_EQ(t.op_count(), 2 * s.op_count());
  // Each sub-op of a forwarding step waits only on the matching sub-op.
  for (const OpRef& o : t.all_ops()) {
    EXPECT_LE(t.op(o).deps.size(), 1u);
  }
  EXPECT_THROW(split_schedule(s, 3, 0), Error);
}

TEST(ScheduleJson, RoundTrip) {
  const CommSchedule s = make_template(
      "partition_allreduce", template_params("partition_allreduce", 4,
                                             {"C", {64, 8}, 4, true}, 0));
  const std::string text = schedule_to_string(s);
  EXPECT_EQ(schedule_from_string(text), s);
  EXPECT_EQ(schedule_to_string(schedule_from_string(text)), text);
  EXPECT_THROW(schedule_from_string("{\"world_size\": 1"), ParseError);
}

}  // namespace
}  // namespace chunksched
