// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chunksched/expr.hpp"
#include "chunksched/schedule.hpp"
#include "chunksched/schedule_json.hpp"

namespace chunksched {

enum class LoweringPath { direct, template_, synth };

LoweringPath path_from_string(const std::string& name);
const char* to_string(LoweringPath path);

// Placement of one tensor over the (1-D) device mesh.
struct Placement {
  enum class Kind { replicated, sharded, partial };
  Kind kind = Kind::replicated;
  int axis = -1;  // tensor axis for sharded placements

  bool operator==(const Placement&) const = default;
};

// Accepts "replicated", "partial" and "sharded(AXIS)" where AXIS is an
// integer or a name from `axis_names`.
Placement parse_placement(const std::string& text,
                          const std::vector<std::string>& axis_names = {});

enum class StepKind { push, pull, local_copy, collective };

// One communication step before it is materialized into per-rank plans.
// P2P steps carry their issuing rank; collective steps cover every rank.
struct Step {
  StepKind kind = StepKind::collective;
  CollectiveType collective = CollectiveType::allgather;
  std::string tensor_id;
  Region region;       // whole region for collectives, src for P2P
  int axis = 0;        // sharding axis (collectives)
  int dst_axis = 0;    // all_to_all target axis
  int rank = 0;        // issuing rank (P2P)
  int peer = 0;        // P2P partner
  Region dst_region;   // P2P destination
  bool accumulate = false;
  std::vector<int> deps;  // indices of earlier steps in the same list
};

std::vector<Step> parse_partition_to_steps(const TensorSpec& tensor,
                                           const Placement& produced,
                                           const Placement& consumed);

// Materializes steps into a schedule over `world_size` ranks. Collective
// steps become Collective ops (direct) or P2P templates (template).
CommSchedule emit_steps(const std::vector<Step>& steps, int world_size,
                        const std::map<std::string, TensorSpec>& tensors,
                        LoweringPath path);

struct PartitionIR {
  int world_size = 1;
  std::map<std::string, TensorSpec> tensors;
  std::map<std::string, std::vector<std::string>> axis_info;
  struct Entry {
    std::string tensor_id;
    Placement produced;
    Placement consumed;
  };
  std::vector<Entry> placements;
};

PartitionIR partition_ir_from_json(const Json& j);
CommSchedule lower_partition_ir(const PartitionIR& ir, LoweringPath path);

enum class IntentKind { fetch, flush, reduce };

struct CommIntent {
  IntentKind kind = IntentKind::fetch;
  std::string tensor_id;
  std::vector<Expr> offsets;
  std::vector<Expr> sizes;
  Expr peer;
  bool carried = false;
};

struct LoopNode {
  // Either a loop (var non-empty) or a single intent.
  std::string var;
  Expr lo, hi;  // half-open [lo, hi)
  std::vector<LoopNode> body;
  std::optional<CommIntent> intent;
};

struct LoopIR {
  int world_size = 1;
  std::map<std::string, int64_t> params;
  std::map<std::string, TensorSpec> tensors;
  struct Owner {
    std::string tensor_id;
    std::vector<Expr> offsets, sizes;
  };
  std::vector<Owner> owners;
  std::vector<LoopNode> body;
};

LoopIR loop_ir_from_json(const Json& j);
CommSchedule lower_loop_ir(const LoopIR& ir, LoweringPath path);

// Dispatches on the document: a "placement" key means partition IR, a "body"
// key loop IR.
CommSchedule lower_ir_document(const Json& j, LoweringPath path);

}  // namespace chunksched
