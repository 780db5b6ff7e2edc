// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "chunksched/region.hpp"

namespace chunksched {

// Names one operation of a per-rank plan. Dependencies use the same encoding:
// an op may not start before op `index` of rank `rank` has completed.
struct OpRef {
  int rank = 0;
  int index = 0;

  auto operator<=>(const OpRef&) const = default;
};
using Dependency = OpRef;

std::string to_string(const OpRef& ref);

enum class Direction { push, pull };
enum class CollectiveType { allgather, reduce_scatter, allreduce, all_to_all };

const char* to_string(Direction direction);
const char* to_string(CollectiveType type);
Direction direction_from_string(const std::string& name);
CollectiveType collective_from_string(const std::string& name);

// Point-to-point transfer recorded on one side of the pair. On the source
// side it is a push (src_chunk read locally, dst_chunk written on `peer`); on
// the destination side a pull (src_chunk read on `peer`, dst_chunk written
// locally). `accumulate` adds into the destination instead of overwriting.
struct P2P {
  Direction direction = Direction::push;
  int peer = 0;
  Chunk src_chunk;
  Chunk dst_chunk;
  bool accumulate = false;

  bool operator==(const P2P&) const = default;
};

// Collective over `ranks`. Every participant issues its own op; the n-th
// collective with a given rank set on each participant forms one group.
// Data movement is location preserving inside one tensor:
//   allgather / all_to_all: participant p receives src_q ∩ dst_p from each q
//   reduce_scatter:         dst_p = Σ_q (q's data over dst_p)
//   allreduce:              dst = Σ_q src_q over the shared region
struct Collective {
  CollectiveType collective_type = CollectiveType::allgather;
  Chunk src_chunk;
  Chunk dst_chunk;
  std::vector<int> ranks;

  bool operator==(const Collective&) const = default;
};

struct CommOp {
  std::variant<P2P, Collective> op;
  std::vector<Dependency> deps;

  bool is_p2p() const { return std::holds_alternative<P2P>(op); }
  const P2P& p2p() const { return std::get<P2P>(op); }
  P2P& p2p() { return std::get<P2P>(op); }
  const Collective& collective() const { return std::get<Collective>(op); }
  Collective& collective() { return std::get<Collective>(op); }
  const Chunk& src_chunk() const;
  const Chunk& dst_chunk() const;
  bool accumulates() const;

  bool operator==(const CommOp&) const = default;
};

struct CommSchedule {
  int world_size = 1;
  std::map<std::string, TensorSpec> tensors;
  std::vector<std::vector<CommOp>> plans;
  // Per rank, the regions that hold valid data before any op runs.
  std::vector<std::vector<Region>> owner_regions;

  const CommOp& op(const OpRef& ref) const {
    return plans[ref.rank][ref.index];
  }
  const TensorSpec& tensor(const std::string& id) const;
  size_t op_count() const;
  std::vector<OpRef> all_ops() const;

  bool operator==(const CommSchedule&) const = default;
};

// An empty schedule over `world_size` ranks.
CommSchedule empty_schedule(int world_size);

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(const std::string& code) const;
};

ValidationReport validate_schedule(const CommSchedule& schedule);

// Topological order of every op. Ready ops are emitted in (rank, index)
// order; per-rank plan order is preserved. Throws on a dependence cycle.
std::vector<OpRef> global_order(const CommSchedule& schedule);

// Matched collective groups, each listed in ascending rank order.
std::vector<std::vector<OpRef>> collective_groups(const CommSchedule& s);

enum class AccessKind { read, write, accumulate };

// One (rank, region) touched by an op. For a collective participant only its
// own rank's contribution and its own received data are listed.
struct Access {
  int rank = 0;
  Region region;
  AccessKind kind = AccessKind::read;
};

// Per-op access lists, indexed [rank][index]. Collective writes need the
// other participants' chunks, hence the whole-schedule form.
std::vector<std::vector<std::vector<Access>>> op_accesses(
    const CommSchedule& schedule);

// The ranks whose buffers an op moves data out of / into.
std::vector<int> source_ranks(const CommSchedule& s, const OpRef& ref);

// Uniformly splits every transfer into `factor` sub-transfers along `axis`.
// Dependencies are re-targeted to the sub-ops that touch overlapping data, so
// pipelining between split transfers is preserved.
CommSchedule split_schedule(const CommSchedule& schedule, int factor, int axis,
                            RemainderRule rule = RemainderRule::strict);

// Appends the plans of `b` after those of `a` (indices of b shift).
CommSchedule concat_schedules(const CommSchedule& a, const CommSchedule& b);

}  // namespace chunksched
