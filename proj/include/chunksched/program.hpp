// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chunksched/backend.hpp"
#include "chunksched/planner.hpp"

namespace chunksched {

using Assignment = std::map<OpRef, BackendKind>;

// `move` for plain transfers, `reduce` for ops that accumulate or reduce.
Assignment uniform_assignment(const CommSchedule& s, BackendKind move,
                              BackendKind reduce);

// Swizzle, dependence graph and sync plan of every rank.
struct Plan {
  std::vector<DepGraph> graphs;
  std::vector<SwizzledSchedule> swizzles;
  std::vector<SyncPlan> syncs;
};
Plan plan_workload(const Workload& w, const IntraPolicy& intra);

enum class OverlapMode { fused, partitioned };
const char* to_string(OverlapMode mode);

struct RealizeOptions {
  int device_sms = 132;
  int comm_sms = 0;
  double launch_overhead = 5e-6;
  OverlapMode mode = OverlapMode::fused;
};

enum class ItemKind { tile, wait, transfer, launch, barrier };
const char* to_string(ItemKind kind);

struct StreamItem {
  ItemKind kind = ItemKind::tile;
  int64_t tile = -1;      // tile
  std::string signal;     // wait
  bool planned = false;   // wait inserted by the sync planner
  OpRef op;               // transfer
  double duration = 0;    // launch, barrier
};

struct Stream {
  std::string name;
  std::optional<BackendKind> backend;  // none for the compute stream
  int sms = 0;                         // driving SMs (specialized streams)
  std::vector<StreamItem> items;
};

struct RankProgram {
  int compute_sms = 0;
  int comm_sms = 0;
  Stream compute;
  std::vector<Stream> comm;
};

// Fires once every listed tile of `rank` has completed.
struct CounterSignal {
  std::string name;
  int rank = 0;
  std::vector<int64_t> tiles;
};

struct DeviceProgram {
  Workload workload;
  BackendProfile profile;
  Assignment assignment;
  OverlapMode mode = OverlapMode::fused;
  std::vector<RankProgram> ranks;
  std::vector<CounterSignal> counters;
};

// Builds per-rank streams. Throws Error listing every op whose assignment is
// illegal, and on SM allocations that do not fit the backends used.
DeviceProgram realize(const Workload& w, const Plan& plan,
                      const Assignment& assignment,
                      const BackendProfile& profile,
                      const RealizeOptions& options);

Json program_to_json(const DeviceProgram& p);
DeviceProgram program_from_json(const Json& j);

// Location of one planner-inserted wait; stream -1 is the compute stream.
struct WaitSite {
  int rank = 0;
  int stream = -1;
  size_t item = 0;
  std::string signal;
};
std::vector<WaitSite> planned_waits(const DeviceProgram& p);
DeviceProgram drop_wait(const DeviceProgram& p, const WaitSite& site);

}  // namespace chunksched
