// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace chunksched {

enum class Layout { row_major, col_major };

const char* to_string(Layout layout);
Layout layout_from_string(const std::string& name);

struct TensorSpec {
  std::string id;
  std::vector<int64_t> shape;
  int elem_bytes = 2;
  bool global = true;

  int64_t elements() const;
  int64_t bytes() const { return elements() * elem_bytes; }
  bool operator==(const TensorSpec&) const = default;
};

// Problems with a TensorSpec, empty when valid.
std::vector<std::string> check_tensor(const TensorSpec& tensor);

// An axis-aligned box of a global tensor, in elements.
struct Region {
  std::string tensor_id;
  std::vector<int64_t> offsets;
  std::vector<int64_t> sizes;

  int dims() const { return static_cast<int>(sizes.size()); }
  int64_t elements() const;
  bool operator==(const Region&) const = default;
  auto operator<=>(const Region&) const = default;
};

Region full_region(const TensorSpec& tensor);

// Problems with `region` against `tensor`, empty when valid.
std::vector<std::string> check_region(const Region& region,
                                      const TensorSpec& tensor);

int64_t byte_volume(const Region& region, const TensorSpec& tensor);

std::optional<Region> intersect(const Region& a, const Region& b);
bool overlaps(const Region& a, const Region& b);
bool contains(const Region& outer, const Region& inner);

// a \ b as a list of disjoint boxes.
std::vector<Region> subtract(const Region& a, const Region& b);

// True when every element of `region` is covered by the union of `cover`.
bool covered_by(const Region& region, const std::vector<Region>& cover);

// Whether the region occupies one contiguous span of the tensor's row-major
// storage.
bool is_contiguous(const Region& region, const std::vector<int64_t>& shape);

// Flat row-major storage indices of the region's elements, visited in the
// order given by `layout` (row-major visits the last axis fastest).
std::vector<int64_t> flat_indices(const Region& region, Layout layout,
                                  const std::vector<int64_t>& shape);

std::string to_string(const Region& region);

struct Chunk {
  Region region;
  Layout layout = Layout::row_major;
  std::string chunk_id;

  bool operator==(const Chunk&) const = default;
};

enum class RemainderRule {
  strict,      // extent must divide evenly
  ceil_first,  // first (extent mod k) pieces get one extra row
};

// Splits `chunk` into `factor` pieces along `axis`, in ascending offset
// order. Throws Error("indivisible split") when the extent does not divide
// and `rule` is strict.
std::vector<Chunk> split_chunk(const Chunk& chunk, int axis, int factor,
                               RemainderRule rule = RemainderRule::strict);

// Inverse of split_chunk: the pieces must abut along `axis` and agree on
// every other axis.
Chunk merge_chunks(const std::vector<Chunk>& pieces, int axis);

// Row-wise decomposition of a strided chunk into contiguous sub-chunks.
std::vector<Chunk> split_contiguous(const Chunk& chunk,
                                    const std::vector<int64_t>& shape);

}  // namespace chunksched
