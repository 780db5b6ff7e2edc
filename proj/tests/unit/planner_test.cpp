// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "chunksched/fixtures.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {
namespace {

GemmShape shape(int64_t m, int64_t n) {
  GemmShape g;
  g.m = m;
  g.n = n;
  return g;
}

std::vector<int64_t> iota(int64_t n) {
  std::vector<int64_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Tiles of `p` whose accesses of the given mode intersect `r`.
std::vector<int64_t> touching(const TileProgram& p, const Region& r, bool write) {
  std::vector<int64_t> out;
  for (int64_t t = 0; t < p.tile_count(); ++t) {
    bool hit = false;
    for (const Region& x : write ? p.writes(t) : p.reads(t)) hit = hit || overlaps(x, r);
    if (hit) out.push_back(t);
  }
  return out;
}

TEST(DepGraph, AllGatherConsumersMatchIntersection) {
  const Workload w = ag_gemm(2, shape(256, 256));
  const DepGraph g = build_depgraph(w, 0);
  // Rank 0 receives rows [128, 256): the tiles with pid_m = 1.
  ASSERT_EQ(g.consumers.size(), 1u);
  const auto& [op, tiles] = *g.consumers.begin();
  EXPECT_EQ(tiles, (std::vector<int64_t>{2, 3}));
  EXPECT_EQ(tiles, touching(*w.program, w.schedule.op(op).dst_chunk().region, false));
  int before_tile = 0;
  for (const DepEdge& e : g.edges) before_tile += e.kind == EdgeKind::chunk_before_tile;
  EXPECT_EQ(before_tile, 2);
}

TEST(DepGraph, EmptySchedule) {
  Workload w;
  w.program = gemm_program(shape(256, 256));
  w.schedule = empty_schedule(1);
  const DepGraph g = build_depgraph(w, 0);
  EXPECT_EQ(g.tile_count, 4);
  EXPECT_TRUE(g.edges.empty());
}

TEST(DepGraph, ReduceScatterProducers) {
  const Workload w = gemm_rs(4, shape(512, 256));
  for (int rank = 0; rank < 4; ++rank) {
    const DepGraph g = build_depgraph(w, rank);
    for (const OpRef& o : w.schedule.all_ops()) {
      const auto src = source_ranks(w.schedule, o);
      if (std::find(src.begin(), src.end(), rank) == src.end()) continue;
      const auto expect =
          touching(*w.program, w.schedule.op(o).src_chunk().region, true);
      if (expect.empty()) continue;
      ASSERT_TRUE(g.producers.count(o)) << to_string(o);
      EXPECT_EQ(g.producers.at(o), expect);
      for (int64_t t : expect) {
        const bool found = std::any_of(g.edges.begin(), g.edges.end(), [&](const DepEdge& e) {
          return e.kind == EdgeKind::tile_before_chunk && e.op == o && e.tile == t;
        });
        EXPECT_TRUE(found);
      }
    }
  }
}

// Two independent incoming transfers into rank 0.
CommSchedule two_incoming() {
  CommSchedule s = empty_schedule(3);
  s.tensors["X"] = {"X", {48}, 2, true};
  s.owner_regions = {{{"X", {0}, {16}}}, {{"X", {16}, {16}}}, {{"X", {32}, {16}}}};
  for (int r : {1, 2}) {
    CommOp op;
    const Chunk c{{"X", {16 * r}, {16}}, Layout::row_major, ""};
    op.op = P2P{Direction::push, 0, c, c, false};
    s.plans[r].push_back(op);
  }
  return s;
}

std::vector<SyncPoint> waits(const SyncPlan& p) {
  std::vector<SyncPoint> out;
  for (const SyncPoint& s : p.points) {
    if (s.kind == SyncPoint::Kind::wait) out.push_back(s);
  }
  return out;
}

TEST(Syncs, SingleWaitBeforeFirstConsumer) {
  DepGraph g;
  g.rank = 0;
  g.tile_count = 16;
  g.consumers[{1, 0}] = {5, 9, 12};
  g.incoming = {{1, 0}};
  const auto w = waits(insert_min_syncs(g, two_incoming(), iota(16)));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].position, 5);
}

TEST(Syncs, InterleavedChunksWaitSeparately) {
  DepGraph g;
  g.rank = 0;
  g.tile_count = 16;
  g.consumers[{1, 0}] = {2, 6};
  g.consumers[{2, 0}] = {4, 8};
  g.incoming = {{1, 0}, {2, 0}};
  const auto w = waits(insert_min_syncs(g, two_incoming(), iota(16)));
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].position, 2);
  EXPECT_EQ(w[0].op, (OpRef{1, 0}));
  EXPECT_EQ(w[1].position, 4);
  EXPECT_EQ(w[1].op, (OpRef{2, 0}));
}

TEST(Syncs, DeadChunk) {
  DepGraph g;
  g.rank = 0;
  g.tile_count = 4;
  g.incoming = {{1, 0}};
  const SyncPlan p = insert_min_syncs(g, two_incoming(), iota(4));
  EXPECT_TRUE(waits(p).empty());
  ASSERT_EQ(p.points.size(), 1u);
  EXPECT_EQ(p.points[0].kind, SyncPoint::Kind::signal);
  ASSERT_EQ(p.diagnostics.size(), 1u);
  EXPECT_NE(p.diagnostics[0].find("dead chunk"), std::string::npos);
}

TEST(Swizzle, RingArrivalOrder) {
  const Workload w = ag_gemm(4, shape(512, 256));
  const SwizzledSchedule s = swizzle_to_chunk_order(w, 0, {});
  // Rank 0 holds shard 0 and receives shards 3, 2, 1 in ring order.
  const std::vector<int64_t> group_of_shard = {0, 3, 2, 1};
  for (int64_t t = 0; t < w.program->tile_count(); ++t) {
    EXPECT_EQ(s.group_of_tile[t], group_of_shard[w.program->coords(t)[0]]) << t;
  }
  ASSERT_EQ(s.chunk_order.size(), 3u);
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(w.schedule.op(s.chunk_order[k]).dst_chunk().region.offsets[0],
              128 * (3 - static_cast<int64_t>(k)));
  }
  EXPECT_EQ(s.order, (std::vector<int64_t>{0, 1, 6, 7, 4, 5, 2, 3}));
}

TEST(Swizzle, NoArrivalsKeepsDefaultOrder) {
  Workload w;
  w.program = gemm_program(shape(512, 512));
  w.schedule = empty_schedule(1);
  const SwizzledSchedule s = swizzle_to_chunk_order(w, 0, {});
  EXPECT_EQ(s.order, default_tile_order(*w.program).order);
}

TEST(Swizzle, GroupedPanels) {
  Workload w;
  w.program = gemm_program(shape(512, 512));
  w.schedule = empty_schedule(1);
  const SwizzledSchedule s =
      swizzle_to_chunk_order(w, 0, intra_from_string("grouped(2)"));
  std::vector<std::vector<int64_t>> coords;
  for (size_t k = 0; k < 5; ++k) coords.push_back(w.program->coords(s.order[k]));
  EXPECT_EQ(coords, (std::vector<std::vector<int64_t>>{
                        {0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}}));
  std::vector<int64_t> sorted = s.order;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, iota(16));
}

TEST(Swizzle, PermutationAndGroupMonotonicity) {
  for (const char* pattern : {"ring_allgather", "allgather_1d_swizzle",
                                     "allgather_2d_swizzle"}) {
    for (const char* intra : {"row_major", "col_major", "grouped(2)"}) {
      const Workload w = ag_gemm(4, shape(1024, 512), pattern, 2);
      for (int rank = 0; rank < 4; ++rank) {
        const SwizzledSchedule s =
            swizzle_to_chunk_order(w, rank, intra_from_string(intra));
        std::vector<int64_t> sorted = s.order;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(sorted, iota(w.program->tile_count()));
        for (size_t k = 1; k < s.order.size(); ++k) {
          EXPECT_LE(s.group_of_tile[s.order[k - 1]], s.group_of_tile[s.order[k]]);
        }
      }
    }
  }
}

TEST(Syncs, EveryWaitHasOneSignal) {
  const Workload w = gemm_ar(4, shape(512, 256), 2);
  const Plan plan = plan_workload(w, {});
  std::map<std::string, int> signals;
  for (const SyncPlan& p : plan.syncs) {
    for (const SyncPoint& s : p.points) {
      if (s.kind == SyncPoint::Kind::signal) ++signals[s.signal];
    }
  }
  for (const SyncPlan& p : plan.syncs) {
    for (const SyncPoint& s : p.points) {
      if (s.kind == SyncPoint::Kind::wait) {
        EXPECT_GE(signals[s.signal], 1) << s.signal;
      }
    }
  }
}

TEST(Intra, Parse) {
  EXPECT_EQ(intra_from_string("row_major").kind, IntraPolicy::Kind::row_major);
  EXPECT_EQ(intra_from_string("grouped(4)").group, 4);
  EXPECT_EQ(to_string(intra_from_string("grouped(4)")), "grouped(4)");
}

}  // namespace
}  // namespace chunksched
