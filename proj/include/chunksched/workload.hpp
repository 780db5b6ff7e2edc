// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chunksched/kernel.hpp"
#include "chunksched/schedule.hpp"

namespace chunksched {

// A communication schedule plus the tile program every rank runs.
struct Workload {
  CommSchedule schedule;
  std::optional<TileProgram> program;
};

// Schedule tensors plus tensors only the program touches. Throws when the
// two disagree on a shape.
std::map<std::string, TensorSpec> workload_tensors(const Workload& w);

// Regions valid on `rank` before anything runs: the schedule's owner regions
// and every tensor only the program reads, minus whatever the tiles write.
struct InitialState {
  std::vector<Region> valid;
  std::vector<Region> produced;  // overrides `valid`
};
InitialState initial_state(const Workload& w, int rank);

// Tiles of `p` whose `access` region intersects `region`, ascending.
std::vector<int64_t> tiles_touching(const TileProgram& p,
                                    const TileAccess& access,
                                    const Region& region);

}  // namespace chunksched
