// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chunksched/workload.hpp"

namespace chunksched {

enum class EdgeKind { chunk_before_tile, tile_before_chunk, chunk_before_chunk };
const char* to_string(EdgeKind kind);

struct DepEdge {
  EdgeKind kind = EdgeKind::chunk_before_chunk;
  OpRef op;           // the chunk op end of the edge
  int64_t tile = -1;  // tile end (chunk/tile edges)
  OpRef from_op;      // producer op (chunk_before_chunk)
};

// Dependence structure between the schedule's ops and one rank's tiles.
struct DepGraph {
  int rank = 0;
  int64_t tile_count = 0;
  std::vector<OpRef> ops;
  std::vector<DepEdge> edges;
  // Tiles reading data an op lands on this rank, and tiles writing data an
  // op reads from this rank. Keys only for ops with at least one tile.
  std::map<OpRef, std::vector<int64_t>> consumers;
  std::map<OpRef, std::vector<int64_t>> producers;
  // Ops that write into this rank (whether or not a tile reads the data).
  std::vector<OpRef> incoming;
};

// Throws Error("unschedulable dependence ...") on a cycle.
DepGraph build_depgraph(const Workload& w, int rank);

std::string depgraph_to_dot(const DepGraph& g);

struct IntraPolicy {
  enum class Kind { row_major, col_major, grouped };
  Kind kind = Kind::row_major;
  int group = 1;

  bool operator==(const IntraPolicy&) const = default;
};
IntraPolicy intra_from_string(const std::string& text);
std::string to_string(const IntraPolicy& p);

struct SwizzledSchedule {
  std::vector<int64_t> order;
  // chunk_order[k] is the op completing group k + 1; group 0 has none.
  std::vector<OpRef> chunk_order;
  std::vector<int64_t> group_start;  // order index where each group begins
  std::vector<int> group_of_tile;
  IntraPolicy intra;
};

// Orders one rank's tiles by the arrival of the chunks they read. Throws
// Error naming the tile and region when a read can never become valid.
SwizzledSchedule swizzle_to_chunk_order(const Workload& w, int rank,
                                        const IntraPolicy& intra);

Json swizzle_to_json(const SwizzledSchedule& s);

struct SyncPoint {
  enum class Kind { wait, signal };
  enum class Stream { tiles, ops };
  Kind kind = Kind::wait;
  Stream stream = Stream::tiles;
  int rank = 0;          // rank owning the stream
  int64_t position = 0;  // tile-order position or op index
  std::string signal;
  OpRef op;                    // guarded chunk op
  std::vector<int64_t> tiles;  // guarded tiles on the graph's rank
};

struct SyncPlan {
  std::vector<SyncPoint> points;
  std::vector<std::string> diagnostics;
};

std::string op_signal(const OpRef& op);
std::string tile_counter_signal(int tile_rank, const OpRef& op);

// Minimal waits/signals enforcing every chunk/tile edge of `g` under the
// tile order `order`.
SyncPlan insert_min_syncs(const DepGraph& g, const CommSchedule& s,
                          const std::vector<int64_t>& order);

}  // namespace chunksched
