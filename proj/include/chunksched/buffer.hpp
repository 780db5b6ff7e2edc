// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chunksched/workload.hpp"

namespace chunksched {

// Dense per-rank tensor contents in row-major storage order.
using Buffers = std::vector<std::map<std::string, std::vector<double>>>;

// Random integers in [-4, 4] for every tensor on every rank.
Buffers make_inputs(const Workload& w, uint64_t seed);

// Bitwise comparison; describes the first mismatch.
std::optional<std::string> first_difference(const Buffers& a,
                                            const Buffers& b);

// Element values with accumulation contributions kept per source rank, so
// the final sum is formed in ascending source order regardless of arrival.
class ValueStore {
 public:
  explicit ValueStore(const Buffers& init);

  std::vector<double> read(int rank, const std::string& tensor,
                           const std::vector<int64_t>& index) const;
  void overwrite(int rank, const std::string& tensor,
                 const std::vector<int64_t>& index,
                 const std::vector<double>& values);
  void accumulate(int rank, const std::string& tensor, int source,
                  const std::vector<int64_t>& index,
                  const std::vector<double>& values);
  Buffers materialize() const;

 private:
  struct Entry {
    std::vector<double> base;
    std::map<int, std::vector<double>> acc;
  };
  double value(const Entry& e, int64_t i) const;

  std::vector<std::map<std::string, Entry>> data_;
};

// Runs a tile body. `reads` holds the values of each read access (in access
// order, row-major over the access region); the result holds the values of
// each write access.
std::vector<std::vector<double>> tile_body(
    const TileProgram& p, int64_t tile,
    const std::map<std::string, TensorSpec>& tensors,
    const std::vector<std::vector<double>>& reads);

}  // namespace chunksched
