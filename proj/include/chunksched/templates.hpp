// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chunksched/schedule.hpp"

namespace chunksched {

// Two-level factorization of the world: rank = group * intra + local.
struct Mesh {
  int intra = 1;
  int inter = 1;
};

struct TemplateParams {
  int world_size = 1;
  TensorSpec tensor;
  int axis = 0;
  std::optional<Mesh> mesh;
  int pipeline_stages = 1;
  // Sub-box of the tensor the pattern runs over; whole tensor when unset.
  std::optional<Region> region;
  RemainderRule remainder = RemainderRule::strict;
};

// Throws Error when the parameters are inconsistent.
void check_params(const TemplateParams& p);

// Shard `j` of the pattern's region (W shards along p.axis).
Chunk template_shard(const TemplateParams& p, int j);

CommSchedule ring_allgather(const TemplateParams& p);
CommSchedule allgather_1d_swizzle(const TemplateParams& p);
CommSchedule allgather_2d_swizzle(const TemplateParams& p);
CommSchedule reduce_scatter(const TemplateParams& p);
CommSchedule partition_allreduce(const TemplateParams& p);
// Resharding from p.axis to `dst_axis`: rank r holds shard r along p.axis and
// ends holding shard r along dst_axis.
CommSchedule all_to_all(const TemplateParams& p, int dst_axis);

// Lookup by name: ring_allgather, allgather_1d_swizzle, allgather_2d_swizzle,
// reduce_scatter, partition_allreduce.
CommSchedule make_template(const std::string& name, const TemplateParams& p);
const std::vector<std::string>& template_names();

}  // namespace chunksched
