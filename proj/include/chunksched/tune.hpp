// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chunksched/sim.hpp"

namespace chunksched {

struct TileConfig {
  int64_t bm = 0;  // <= 0 keeps the program's block
  int64_t bn = 0;
  int64_t bk = 0;
  int stages = 1;  // recorded only; the cost model has no pipeline depth

  bool operator==(const TileConfig&) const = default;
};

// One point of the search space. Plain transfers use `backend`; transfers
// that accumulate or reduce use `reduce_backend`.
struct TuneConfig {
  int split = 1;
  int split_axis = 0;
  BackendKind backend = BackendKind::copy_engine;
  BackendKind reduce_backend = BackendKind::ldst_colocated;
  int comm_sms = 0;
  IntraPolicy intra;
  TileConfig tile;
};

struct TuneSpace {
  std::vector<int> splits = {1};
  std::vector<int> split_axes = {0};
  std::vector<BackendKind> backends = {BackendKind::copy_engine};
  std::vector<BackendKind> reduce_backends = {BackendKind::ldst_colocated};
  std::vector<int> comm_sms = {0};
  std::vector<IntraPolicy> intra = {IntraPolicy{}};
  std::vector<TileConfig> tiles = {TileConfig{}};
};

// Cartesian product in knob order: split, split_axis, backend,
// reduce_backend, comm_sms, intra, tile. This order is the tie-break.
std::vector<TuneConfig> enumerate_space(const TuneSpace& space);

struct TuneRow {
  TuneConfig config;
  bool feasible = false;
  std::string pruned_reason;
  double makespan = 0;  // seconds, when feasible
};

// Applies a candidate's split and tile knobs to a base workload.
Workload apply_config(const Workload& base, const TuneConfig& c);

// Pruning reason for one candidate, empty when it survives.
std::string prune_reason(const Workload& w, const TuneConfig& c,
                         const BackendProfile& profile, int device_sms);

// Prunes and simulates one candidate.
TuneRow evaluate(const Workload& base, const TuneConfig& c,
                 const BackendProfile& profile, const SimConfig& cfg);

struct TuneResult {
  std::vector<TuneRow> rows;  // enumeration order
  int best = -1;              // index into rows, -1 when none is feasible
  double best_makespan = 0;
};

// Evaluates candidates with OpenMP threads.
TuneResult tune(const TuneSpace& space, const Workload& base,
                const BackendProfile& profile, const SimConfig& cfg);
// Same result, one candidate at a time.
TuneResult tune_serial(const TuneSpace& space, const Workload& base,
                       const BackendProfile& profile, const SimConfig& cfg);

std::string tune_csv(const TuneResult& r);
// Best makespan per split factor and per comm-SM count.
std::string sweep_csv(const TuneResult& r);
Json config_to_json(const TuneConfig& c);
// "reason: count" lines over pruned rows.
std::string prune_summary(const TuneResult& r);

}  // namespace chunksched
