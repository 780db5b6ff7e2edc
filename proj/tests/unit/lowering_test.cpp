// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "chunksched/error.hpp"
#include "chunksched/fixtures.hpp"
#include "chunksched/lowering.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {
namespace {

const TensorSpec kX{"X", {64, 32}, 2, true};

Json load(const std::string& name) {
  std::ifstream in(std::string(CHUNKSCHED_FIXTURE_DIR) + "/" + name);
  std::stringstream s;
  s << in.rdbuf();
  return Json::parse(s.str());
}

Buffers reference_of(const CommSchedule& s, const Buffers& in) {
  Workload w;
  w.schedule = s;
  const ReferenceResult r = reference_execute(w, in);
  EXPECT_TRUE(r.violations.empty());
  return r.buffers;
}

TEST(Expr, ParseAndEvaluate) {
  const Expr e = Expr::parse("(r - k - 1) mod W * 4 + 2");
  EXPECT_EQ(e.eval({{"r", 0}, {"k", 0}, {"W", 4}}), 14);
  EXPECT_EQ(Expr::parse("-7 / 2").eval({}), -4);
  EXPECT_EQ(Expr::parse("-7 % 3").eval({}), 2);
  EXPECT_EQ(e.symbols(), (std::set<std::string>{"W", "k", "r"}));
  EXPECT_EQ(Expr::parse("k * 4 + r").degree({"k"}), 1);
  EXPECT_EQ(Expr::parse("W * 4").degree({"k"}), 0);
  EXPECT_THROW(Expr::parse("k * k").degree({"k"}), Error);
  EXPECT_THROW(Expr::parse("4 / k").degree({"k"}), Error);
  EXPECT_THROW(Expr::parse("(1 + "), Error);
}

TEST(Placement, Parse) {
  EXPECT_EQ(parse_placement("replicated").kind, Placement::Kind::replicated);
  EXPECT_EQ(parse_placement("partial").kind, Placement::Kind::partial);
  const Placement s = parse_placement("sharded(cols)", {"rows", "cols"});
  EXPECT_EQ(s.kind, Placement::Kind::sharded);
  EXPECT_EQ(s.axis, 1);
  EXPECT_EQ(parse_placement("sharded(0)").axis, 0);
  EXPECT_THROW(parse_placement("sharded(depth)", {"rows"}), Error);
  EXPECT_THROW(parse_placement("mirrored"), Error);
}

TEST(PartitionSteps, RuleTable) {
  const Placement rep{Placement::Kind::replicated, -1};
  const Placement part{Placement::Kind::partial, -1};
  const Placement sh0{Placement::Kind::sharded, 0};
  const Placement sh1{Placement::Kind::sharded, 1};

  auto steps = parse_partition_to_steps(kX, sh0, rep);
  ASSERT_EQ(steps.size(), 1u);
  EXPECT_EQ(steps[0].kind, StepKind::collective);
  EXPECT_EQ(steps[0].collective, CollectiveType::allgather);
  EXPECT_EQ(steps[0].axis, 0);

  EXPECT_TRUE(parse_partition_to_steps(kX, rep, rep).empty());

  steps = parse_partition_to_steps(kX, part, sh0);
  ASSERT_EQ(steps.size(), 1u);
  EXPECT_EQ(steps[0].collective, CollectiveType::reduce_scatter);

  steps = parse_partition_to_steps(kX, part, rep);
  ASSERT_EQ(steps.size(), 1u);
  EXPECT_EQ(steps[0].collective, CollectiveType::allreduce);

  steps = parse_partition_to_steps(kX, sh0, sh1);
  ASSERT_EQ(steps.size(), 1u);
  EXPECT_EQ(steps[0].collective, CollectiveType::all_to_all);
  EXPECT_EQ(steps[0].dst_axis, 1);
}

TEST(PartitionSteps, ReduceScatterOracle) {
  PartitionIR ir;
  ir.world_size = 4;
  ir.tensors["X"] = kX;
  ir.placements.push_back({"X", {Placement::Kind::partial, -1},
                           {Placement::Kind::sharded, 0}});
  const CommSchedule s = lower_partition_ir(ir, LoweringPath::template_);
  ASSERT_TRUE(validate_schedule(s).ok());
  Workload w;
  w.schedule = s;
  const Buffers in = make_inputs(w, 9);
  const Buffers out = reference_of(s, in);
  for (int r = 0; r < 4; ++r) {
    const Region mine{"X", {16 * r, 0}, {16, 32}};
    for (int64_t i : flat_indices(mine, Layout::row_major, kX.shape)) {
      double sum = 0;
      for (int q = 0; q < 4; ++q) sum += in[q].at("X")[i];
      EXPECT_EQ(out[r].at("X")[i], sum);
    }
  }
}

TEST(EmitSteps, TemplatePathMatchesSwizzle) {
  const auto steps = parse_partition_to_steps(
      kX, {Placement::Kind::sharded, 0}, {Placement::Kind::replicated, -1});
  const CommSchedule s =
      emit_steps(steps, 4, {{"X", kX}}, LoweringPath::template_);
  TemplateParams p;
  p.world_size = 4;
  p.tensor = kX;
  EXPECT_EQ(s, allgather_1d_swizzle(p));
}

TEST(EmitSteps, DirectPathUsesCollectives) {
  const auto steps = parse_partition_to_steps(
      kX, {Placement::Kind::sharded, 0}, {Placement::Kind::replicated, -1});
  const CommSchedule s = emit_steps(steps, 4, {{"X", kX}}, LoweringPath::direct);
  for (int r = 0; r < 4; ++r) {
    ASSERT_EQ(s.plans[r].size(), 1u);
    EXPECT_FALSE(s.plans[r][0].is_p2p());
    EXPECT_EQ(s.plans[r][0].collective().collective_type,
              CollectiveType::allgather);
  }
  EXPECT_TRUE(validate_schedule(s).ok());
}

TEST(EmitSteps, EmptyStepsGiveEmptySchedule) {
  const CommSchedule s = emit_steps({}, 4, {{"X", kX}}, LoweringPath::template_);
  EXPECT_EQ(s.op_count(), 0u);
  EXPECT_EQ(s.world_size, 4);
  EXPECT_TRUE(validate_schedule(s).ok());
}

TEST(PartitionIR, PathsAgreeOnFixture) {
  const PartitionIR ir = partition_ir_from_json(load("partition_ir.json"));
  ASSERT_EQ(ir.world_size, 4);
  const CommSchedule d = lower_partition_ir(ir, LoweringPath::direct);
  const CommSchedule t = lower_partition_ir(ir, LoweringPath::template_);
  Workload w;
  w.schedule = d;
  const Buffers in = make_inputs(w, 21);
  EXPECT_FALSE(first_difference(reference_of(d, in), reference_of(t, in)));
  EXPECT_THROW(lower_partition_ir(ir, LoweringPath::synth), UnimplementedError);
}

TEST(Lowering, Deterministic) {
  const Json doc = load("partition_ir.json");
  const std::string a =
      schedule_to_string(lower_ir_document(doc, LoweringPath::template_));
  const std::string b =
      schedule_to_string(lower_ir_document(doc, LoweringPath::template_));
  EXPECT_EQ(a, b);
}

Json ring_loop(int world) {
  return Json::parse(R"({
    "world_size": )" + std::to_string(world) + R"(,
    "tensors": [{"tensor_id": "KV", "shape": [)" + std::to_string(4 * world) +
                     R"(, 8], "elem_bytes": 2}],
    "owner": [{"tensor": "KV", "offsets": ["r * 4", 0], "sizes": [4, 8]}],
    "body": [{"for": "k", "lo": 0, "hi": "W - 1", "body": [
      {"intent": "fetch", "tensor": "KV", "carried": true,
       "offsets": ["((r - k - 1) mod W) * 4", 0], "sizes": [4, 8],
       "peer": "(r - 1) mod W"}]}]
  })");
}

TEST(LoopIR, RingAttentionMatchesRingTemplate) {
  const int world = 4;
  const CommSchedule s =
      lower_loop_ir(loop_ir_from_json(ring_loop(world)), LoweringPath::template_);
  ASSERT_TRUE(validate_schedule(s).ok());
  TemplateParams p;
  p.world_size = world;
  p.tensor = {"KV", {4 * world, 8}, 2, true};
  const CommSchedule ring = ring_allgather(p);
  for (int r = 0; r < world; ++r) {
    ASSERT_EQ(s.plans[r].size(), static_cast<size_t>(world - 1));
    for (int k = 0; k < world - 1; ++k) {
      const CommOp& op = s.plans[r][k];
      EXPECT_EQ(op.p2p().direction, Direction::pull);
      EXPECT_EQ(op.p2p().peer, (r + world - 1) % world);
      // Chained: step k reads what the peer fetched at step k - 1.
      if (k == 0) {
        EXPECT_TRUE(op.deps.empty());
      } else {
        EXPECT_EQ(op.deps, (std::vector<OpRef>{{(r + world - 1) % world, k - 1}}));
      }
      // The same shard the ring delivers to this rank at step k.
      const int sender = (r + world - 1) % world;
      EXPECT_EQ(op.p2p().dst_chunk.region,
                ring.plans[sender][k].p2p().dst_chunk.region);
    }
  }
  Workload w;
  w.schedule = s;
  const Buffers in = make_inputs(w, 4);
  EXPECT_FALSE(first_difference(reference_of(s, in), reference_of(ring, in)));
}

TEST(LoopIR, ZeroIntentsGiveEmptySchedule) {
  Json doc = ring_loop(4);
  doc["body"] = Json::array();
  const CommSchedule s = lower_loop_ir(loop_ir_from_json(doc), LoweringPath::template_);
  EXPECT_EQ(s.op_count(), 0u);
  EXPECT_TRUE(validate_schedule(s).ok());
}

TEST(LoopIR, NestedRingHasTwoChains) {
  // Two interleaved rings over halves of the columns.
  Json doc = ring_loop(4);
  doc["body"] = Json::parse(R"([{"for": "h", "lo": 0, "hi": 2, "body": [
      {"for": "k", "lo": 0, "hi": "W - 1", "body": [
        {"intent": "fetch", "tensor": "KV", "carried": true,
         "offsets": ["((r - k - 1) mod W) * 4", "h * 4"], "sizes": [4, 4],
         "peer": "(r - 1) mod W"}]}]}])");
  const CommSchedule s = lower_loop_ir(loop_ir_from_json(doc), LoweringPath::template_);
  ASSERT_TRUE(validate_schedule(s).ok());
  for (int r = 0; r < 4; ++r) {
    ASSERT_EQ(s.plans[r].size(), 6u);  // 2 x 3 trips
    int roots = 0;
    for (const CommOp& op : s.plans[r]) roots += op.deps.empty();
    EXPECT_EQ(roots, 2);
  }
}

TEST(LoopIR, DynamicBoundsRejected) {
  Json doc = ring_loop(4);
  doc["body"] = Json::parse(R"([{"for": "i", "lo": 0, "hi": 2, "body": [
      {"for": "j", "lo": 0, "hi": "i + 1", "body": []}]}])");
  EXPECT_THROW(lower_loop_ir(loop_ir_from_json(doc), LoweringPath::template_),
               Error);
}

}  // namespace
}  // namespace chunksched
