// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/fixtures.hpp"

namespace chunksched {

TileProgram gemm_program(const GemmShape& g) {
  TileProgram p;
  p.axes = {{"M", g.m, g.bm, "BLOCK_M", "pid_m"},
            {"N", g.n, g.bn, "BLOCK_N", "pid_n"},
            {"K", g.k, g.bk, "BLOCK_K", ""}};
  p.spatial = {"M", "N"};
  p.accesses = {{"A", false, {"M", "K"}, g.elem_bytes},
                {"B", false, {"N", "K"}, g.elem_bytes},
                {"C", true, {"M", "N"}, g.elem_bytes}};
  p.body = g.body;
  return p;
}

Mesh default_mesh(int world_size) {
  if (world_size >= 4 && world_size % 2 == 0) return {world_size / 2, 2};
  return {world_size, 1};
}

TemplateParams template_params(const std::string& name, int world_size,
                               const TensorSpec& tensor, int axis, int split) {
  TemplateParams p;
  p.world_size = world_size;
  p.tensor = tensor;
  p.axis = axis;
  p.pipeline_stages = split;
  if (name == "allgather_2d_swizzle") p.mesh = default_mesh(world_size);
  return p;
}

namespace {

TensorSpec tensor(const std::string& id, int64_t rows, int64_t cols,
                  int elem_bytes) {
  return {id, {rows, cols}, elem_bytes, true};
}

}  // namespace

Workload ag_gemm(int world_size, const GemmShape& g, const std::string& pattern,
                 int split) {
  Workload w;
  w.program = gemm_program(g);
  w.schedule = make_template(
      pattern, template_params(pattern, world_size,
                               tensor("A", g.m, g.k, g.elem_bytes), 0, split));
  return w;
}

Workload gemm_rs(int world_size, const GemmShape& g, int split) {
  Workload w;
  w.program = gemm_program(g);
  w.schedule = reduce_scatter(template_params(
      "reduce_scatter", world_size, tensor("C", g.m, g.n, g.elem_bytes), 0,
      split));
  return w;
}

Workload gemm_ar(int world_size, const GemmShape& g, int split) {
  Workload w;
  w.program = gemm_program(g);
  w.schedule = partition_allreduce(template_params(
      "partition_allreduce", world_size, tensor("C", g.m, g.n, g.elem_bytes),
      0, split));
  return w;
}

Workload comm_only(const std::string& pattern, int world_size, int64_t rows,
                   int64_t cols, int split, int elem_bytes) {
  Workload w;
  w.schedule = make_template(
      pattern, template_params(pattern, world_size,
                               tensor("X", rows, cols, elem_bytes), 0, split));
  return w;
}

}  // namespace chunksched
