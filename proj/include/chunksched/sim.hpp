// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chunksched/buffer.hpp"
#include "chunksched/program.hpp"

namespace chunksched {

struct Jitter {
  bool enabled = false;
  uint64_t seed = 0;
  double scale_lo = 0.5;   // multiplicative factor on tile and latency times
  double scale_hi = 1.5;
  double max_delay = 2e-6;  // additive uniform delay, seconds
  // When > 1, one rank drawn per run runs its tiles and launches this much
  // slower.
  double straggler = 1.0;
};

enum class PayloadMode { automatic, on, off };

struct SimConfig {
  int sms_per_device = 132;
  double pair_bw = 450e9;    // bytes/s between one ordered pair of devices
  double egress_bw = 450e9;  // per device; egress + ingress = 900 GB/s
  double ingress_bw = 450e9;
  double flops_per_sm = 989e12 / 132;
  double launch_overhead = 5e-6;
  Jitter jitter;
  PayloadMode payload = PayloadMode::automatic;
  uint64_t payload_seed = 1;
  int64_t auto_payload_limit = 1 << 22;  // elements over all ranks
};

struct TimelineEvent {
  int rank = 0;
  std::string resource;
  double start = 0;
  double end = 0;
  std::string label;
  std::vector<std::string> waited;  // signals consumed right before start

  bool operator==(const TimelineEvent&) const = default;
};

struct Timeline {
  std::vector<TimelineEvent> events;
  std::map<std::string, double> signal_times;
  double makespan = 0;
  // Busy fraction of the makespan, keyed "rank/resource".
  std::map<std::string, double> utilization;
  // Mean busy fraction of the compute SMs over all ranks.
  double compute_utilization = 0;
};

struct SimResult {
  Timeline timeline;
  std::vector<Violation> violations;
  std::optional<Buffers> buffers;  // when the payload was simulated
};

// Throws Error with a wait-for report on deadlock.
SimResult simulate(const DeviceProgram& program, const SimConfig& cfg);

// Like simulate, with explicit initial buffers.
SimResult simulate(const DeviceProgram& program, const SimConfig& cfg,
                   const Buffers& inputs);

struct ReferenceResult {
  Buffers buffers;
  std::vector<Violation> violations;
};

// Timing-free sequential execution defining the expected final state.
ReferenceResult reference_execute(const Workload& w, const Buffers& inputs);

struct OverlapReport {
  double fused_makespan = 0;
  double partitioned_makespan = 0;
  double fused_utilization = 0;
  double partitioned_utilization = 0;
};

OverlapReport compare_overlap_modes(const Workload& w, const Plan& plan,
                                    const Assignment& assignment,
                                    const BackendProfile& profile,
                                    const SimConfig& cfg, int comm_sms = 0);

// Chrome trace JSON plus a per-resource CSV summary.
struct TraceEvent {
  std::string name;
  double ts = 0;   // microseconds
  double dur = 0;  // microseconds
  int pid = 0;
  std::string tid;

  bool operator==(const TraceEvent&) const = default;
};
std::vector<TraceEvent> trace_events(const Timeline& t);
std::string trace_json(const Timeline& t);
std::vector<TraceEvent> parse_trace_json(const std::string& text);
// Rebuilds lanes, makespan and per-lane utilization (no signal times).
Timeline timeline_from_trace(const std::vector<TraceEvent>& events);
std::string trace_csv(const Timeline& t);
void export_trace(const Timeline& t, const std::string& json_path,
                  const std::string& csv_path);

// Problems with a timeline: overlapping events on one resource and events
// starting before a signal they consumed fired. Empty when consistent.
std::vector<std::string> check_timeline(const Timeline& t);

}  // namespace chunksched
