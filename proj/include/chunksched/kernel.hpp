// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chunksched/region.hpp"
#include "chunksched/schedule_json.hpp"

namespace chunksched {

struct Axis {
  std::string name;
  int64_t extent = 1;
  int64_t block = 1;
  std::string block_symbol;
  std::string pid_var;  // empty for reduction axes

  bool spatial() const { return !pid_var.empty(); }
  int64_t tiles() const { return (extent + block - 1) / block; }
  bool operator==(const Axis&) const = default;
};

enum class SchedulerKind { persistent, flat };
enum class TileBody { checksum, gemm };

const char* to_string(SchedulerKind kind);
const char* to_string(TileBody body);

// One tensor touched by every tile. Each dim names an axis (spatial axes
// give the tile's block, reduction axes the full extent) or is an integer
// literal meaning a full dimension of that size.
struct TileAccess {
  std::string tensor_id;
  bool write = false;
  std::vector<std::string> dims;
  int elem_bytes = 2;

  bool operator==(const TileAccess&) const = default;
};

struct TileProgram {
  std::vector<Axis> axes;            // declaration order
  std::vector<std::string> spatial;  // pid_map order; tile id is row-major
  SchedulerKind scheduler = SchedulerKind::persistent;
  int sm_count = 132;
  std::vector<TileAccess> accesses;
  double flops_override = -1;  // < 0: 2 * prod(spatial blocks) * prod(reductions)
  TileBody body = TileBody::checksum;

  const Axis& axis(const std::string& name) const;
  int64_t tile_count() const;
  double flops_per_tile() const;
  // Per spatial axis (pid_map order) block coordinate of `tile`.
  std::vector<int64_t> coords(int64_t tile) const;
  int64_t tile_id(const std::vector<int64_t>& coords) const;
  Region region(const TileAccess& access, int64_t tile) const;
  std::vector<Region> reads(int64_t tile) const;
  std::vector<Region> writes(int64_t tile) const;
  std::vector<TensorSpec> tensors() const;

  bool operator==(const TileProgram&) const = default;
};

struct ParsedKernel {
  TileProgram program;
  std::vector<std::string> diagnostics;
  bool empty = false;  // no directives at all
};

// Throws ParseError naming the offending line on hard errors.
ParsedKernel parse_annotations(const std::string& source);
std::string print_annotations(const TileProgram& p);

// Replaces the block sizes of the first two spatial axes and the first
// reduction axis (values <= 0 keep the current block).
TileProgram with_tile_config(const TileProgram& p, int64_t bm, int64_t bn,
                             int64_t bk);

struct WaveSchedule {
  std::vector<int64_t> order;
  int sm_count = 1;

  int64_t wave_count() const;
  std::vector<std::vector<int64_t>> waves() const;
};

WaveSchedule default_tile_order(const TileProgram& p);
double sm_utilization(const TileProgram& p, const WaveSchedule& order);

void to_json(Json& j, const TileProgram& p);
void from_json(const Json& j, TileProgram& p);

}  // namespace chunksched
