// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "chunksched/templates.hpp"
#include "chunksched/workload.hpp"

namespace chunksched {

struct GemmShape {
  int64_t m = 256;
  int64_t n = 256;
  int64_t k = 64;
  int64_t bm = 128;
  int64_t bn = 128;
  int64_t bk = 64;
  int elem_bytes = 2;
  TileBody body = TileBody::gemm;
};

// Persistent GEMM C[M,N] = A[M,K] * B[N,K]^T with M, N spatial.
TileProgram gemm_program(const GemmShape& g);

// intra x inter factorization used when a template needs a mesh.
Mesh default_mesh(int world_size);

TemplateParams template_params(const std::string& name, int world_size,
                               const TensorSpec& tensor, int axis,
                               int split = 1);

// A is gathered along M by `pattern`; every rank computes all of C.
Workload ag_gemm(int world_size, const GemmShape& g,
                 const std::string& pattern = "ring_allgather", int split = 1);
// Partial C reduced and scattered along M.
Workload gemm_rs(int world_size, const GemmShape& g, int split = 1);
// Partial C all-reduced with the partition pattern.
Workload gemm_ar(int world_size, const GemmShape& g, int split = 1);
// Template over a 2-D tensor with no tile program.
Workload comm_only(const std::string& pattern, int world_size, int64_t rows,
                   int64_t cols, int split = 1, int elem_bytes = 2);

}  // namespace chunksched
