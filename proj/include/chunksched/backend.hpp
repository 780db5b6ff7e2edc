// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chunksched/schedule.hpp"
#include "chunksched/schedule_json.hpp"

namespace chunksched {

enum class BackendKind {
  copy_engine,
  tma_specialized,
  tma_colocated,
  ldst_specialized,
  ldst_colocated,
};

const char* to_string(BackendKind kind);
BackendKind backend_from_string(const std::string& name);
const std::vector<BackendKind>& all_backends();
bool is_specialized(BackendKind kind);
bool is_colocated(BackendKind kind);

struct BackendCostParams {
  double peak_bw = 0;         // GB/s (1 GB = 1e9 bytes)
  double launch_latency = 0;  // seconds per issued transfer
  double per_sm_bw = 0;       // GB/s per driving SM
  int max_useful_sms = 0;
  int64_t min_efficient_bytes = 0;
  bool supports_collective_reduce = false;
  bool supports_strided = false;
  bool consumes_sms = false;

  bool operator==(const BackendCostParams&) const = default;
};

struct BackendProfile {
  std::string name;
  std::map<BackendKind, BackendCostParams> backends;
  double signal_latency = 0;  // seconds from op completion to remote wait

  const BackendCostParams& at(BackendKind kind) const;
  bool operator==(const BackendProfile&) const = default;
};

// Built-in H100 numbers; profiles/h100.json holds the same values.
BackendProfile h100_profile();
BackendProfile profile_from_json(const Json& j);
Json profile_to_json(const BackendProfile& p);
BackendProfile load_profile(const std::string& path);

// Driver-side throughput limit in bytes/s. SM-driven backends scale with
// `sms` up to max_useful_sms and are capped at the peak.
double driver_cap(BackendKind kind, int sms, const BackendProfile& profile);

// bytes / (launch_latency + bytes / cap), in GB/s.
double effective_bandwidth(double bytes, BackendKind kind, int sms,
                           const BackendProfile& profile);

struct Feasibility {
  enum class Verdict { ok, illegal, inefficient };
  Verdict verdict = Verdict::ok;
  std::string reason;

  bool ok() const { return verdict == Verdict::ok; }
  bool legal() const { return verdict != Verdict::illegal; }
};

Feasibility feasible(const CommOp& op, const CommSchedule& s, BackendKind kind,
                     const BackendProfile& profile);

// Bytes a transfer moves (the src chunk for P2P and allgather-style
// collectives, the dst chunk for reductions).
int64_t op_bytes(const CommOp& op, const CommSchedule& s);

}  // namespace chunksched
