// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/region.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "chunksched/error.hpp"

namespace chunksched {

const char* to_string(Layout layout) {
  return layout == Layout::row_major ? "row_major" : "col_major";
}

Layout layout_from_string(const std::string& name) {
  if (name == "row_major") return Layout::row_major;
  if (name == "col_major") return Layout::col_major;
  throw ParseError("unknown layout '" + name + "'");
}

int64_t TensorSpec::elements() const {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                         std::multiplies<>());
}

std::vector<std::string> check_tensor(const TensorSpec& tensor) {
  std::vector<std::string> problems;
  if (tensor.shape.empty()) {
    problems.push_back("tensor " + tensor.id + " has an empty shape");
  }
  for (int64_t extent : tensor.shape) {
    if (extent < 1) {
      problems.push_back("tensor " + tensor.id + " has a non-positive extent");
      break;
    }
  }
  const int b = tensor.elem_bytes;
  if (b != 1 && b != 2 && b != 4 && b != 8) {
    problems.push_back("tensor " + tensor.id + " has elem_bytes " +
                       std::to_string(b) + " (expected 1, 2, 4 or 8)");
  }
  return problems;
}

int64_t Region::elements() const {
  return std::accumulate(sizes.begin(), sizes.end(), int64_t{1},
                         std::multiplies<>());
}

Region full_region(const TensorSpec& tensor) {
  return Region{tensor.id, std::vector<int64_t>(tensor.shape.size(), 0),
                tensor.shape};
}

std::vector<std::string> check_region(const Region& region,
                                      const TensorSpec& tensor) {
  std::vector<std::string> problems;
  if (region.offsets.size() != region.sizes.size() ||
      region.sizes.size() != tensor.shape.size()) {
    problems.push_back("region " + to_string(region) + " has rank " +
                       std::to_string(region.sizes.size()) + " but tensor " +
                       tensor.id + " has rank " +
                       std::to_string(tensor.shape.size()));
    return problems;
  }
  for (size_t d = 0; d < region.sizes.size(); ++d) {
    if (region.sizes[d] < 1) {
      problems.push_back("region " + to_string(region) +
                         " has an empty axis " + std::to_string(d));
    } else if (region.offsets[d] < 0 ||
               region.offsets[d] + region.sizes[d] > tensor.shape[d]) {
      problems.push_back("region " + to_string(region) +
                         " is out of bounds on axis " + std::to_string(d));
    }
  }
  return problems;
}

int64_t byte_volume(const Region& region, const TensorSpec& tensor) {
  return region.elements() * tensor.elem_bytes;
}

std::optional<Region> intersect(const Region& a, const Region& b) {
  if (a.tensor_id != b.tensor_id || a.sizes.size() != b.sizes.size()) {
    return std::nullopt;
  }
  Region out{a.tensor_id, {}, {}};
  out.offsets.resize(a.sizes.size());
  out.sizes.resize(a.sizes.size());
  for (size_t d = 0; d < a.sizes.size(); ++d) {
    const int64_t lo = std::max(a.offsets[d], b.offsets[d]);
    const int64_t hi =
        std::min(a.offsets[d] + a.sizes[d], b.offsets[d] + b.sizes[d]);
    if (hi <= lo) return std::nullopt;
    out.offsets[d] = lo;
    out.sizes[d] = hi - lo;
  }
  return out;
}

bool overlaps(const Region& a, const Region& b) {
  if (a.tensor_id != b.tensor_id || a.sizes.size() != b.sizes.size()) {
    return false;
  }
  for (size_t d = 0; d < a.sizes.size(); ++d) {
    if (a.offsets[d] >= b.offsets[d] + b.sizes[d] ||
        b.offsets[d] >= a.offsets[d] + a.sizes[d]) {
      return false;
    }
  }
  return true;
}

bool contains(const Region& outer, const Region& inner) {
  if (outer.tensor_id != inner.tensor_id ||
      outer.sizes.size() != inner.sizes.size()) {
    return false;
  }
  for (size_t d = 0; d < outer.sizes.size(); ++d) {
    if (inner.offsets[d] < outer.offsets[d] ||
        inner.offsets[d] + inner.sizes[d] >
            outer.offsets[d] + outer.sizes[d]) {
      return false;
    }
  }
  return true;
}

std::vector<Region> subtract(const Region& a, const Region& b) {
  auto cut = intersect(a, b);
  if (!cut) return {a};
  std::vector<Region> pieces;
  Region rest = a;
  // Peel slabs below and above the intersection one axis at a time.
  for (size_t d = 0; d < a.sizes.size(); ++d) {
    const int64_t lo = cut->offsets[d];
    const int64_t hi = lo + cut->sizes[d];
    const int64_t rest_hi = rest.offsets[d] + rest.sizes[d];
    if (lo > rest.offsets[d]) {
      Region below = rest;
      below.sizes[d] = lo - rest.offsets[d];
      pieces.push_back(below);
    }
    if (hi < rest_hi) {
      Region above = rest;
      above.offsets[d] = hi;
      above.sizes[d] = rest_hi - hi;
      pieces.push_back(above);
    }
    rest.offsets[d] = lo;
    rest.sizes[d] = hi - lo;
  }
  return pieces;
}

bool covered_by(const Region& region, const std::vector<Region>& cover) {
  std::vector<Region> open{region};
  for (const Region& c : cover) {
    std::vector<Region> next;
    for (const Region& piece : open) {
      auto rest = subtract(piece, c);
      next.insert(next.end(), rest.begin(), rest.end());
    }
    open = std::move(next);
    if (open.empty()) return true;
  }
  return open.empty();
}

bool is_contiguous(const Region& region, const std::vector<int64_t>& shape) {
  const size_t n = region.sizes.size();
  size_t first = 0;
  while (first < n && region.sizes[first] == 1) ++first;
  for (size_t d = first + 1; d < n; ++d) {
    if (region.sizes[d] != shape[d]) return false;
  }
  return true;
}

std::vector<int64_t> flat_indices(const Region& region, Layout layout,
                                  const std::vector<int64_t>& shape) {
  const int n = region.dims();
  std::vector<int64_t> strides(n, 1);
  for (int d = n - 2; d >= 0; --d) strides[d] = strides[d + 1] * shape[d + 1];

  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(region.elements()));
  std::vector<int64_t> idx(n, 0);
  const int64_t total = region.elements();
  for (int64_t e = 0; e < total; ++e) {
    int64_t flat = 0;
    for (int d = 0; d < n; ++d) {
      flat += (region.offsets[d] + idx[d]) * strides[d];
    }
    out.push_back(flat);
    // Advance the odometer: row-major bumps the last axis first.
    if (layout == Layout::row_major) {
      for (int d = n - 1; d >= 0; --d) {
        if (++idx[d] < region.sizes[d]) break;
        idx[d] = 0;
      }
    } else {
      for (int d = 0; d < n; ++d) {
        if (++idx[d] < region.sizes[d]) break;
        idx[d] = 0;
      }
    }
  }
  return out;
}

std::string to_string(const Region& region) {
  std::ostringstream os;
  os << region.tensor_id << "[";
  for (size_t d = 0; d < region.sizes.size(); ++d) {
    if (d) os << ",";
    os << region.offsets[d] << ":" << region.offsets[d] + region.sizes[d];
  }
  os << "]";
  return os.str();
}

std::vector<Chunk> split_chunk(const Chunk& chunk, int axis, int factor,
                               RemainderRule rule) {
  if (factor < 1) throw Error("split factor must be >= 1");
  if (axis < 0 || axis >= chunk.region.dims()) {
    throw Error("split axis " + std::to_string(axis) + " out of range for " +
                to_string(chunk.region));
  }
  if (factor == 1) return {chunk};
  const int64_t extent = chunk.region.sizes[axis];
  if (extent < factor) {
    throw Error("indivisible split: " + to_string(chunk.region) +
                " has fewer rows than the split factor");
  }
  const int64_t base = extent / factor;
  const int64_t extra = extent % factor;
  if (extra != 0 && rule == RemainderRule::strict) {
    throw Error("indivisible split: extent " + std::to_string(extent) +
                " of " + to_string(chunk.region) + " by " +
                std::to_string(factor));
  }
  std::vector<Chunk> pieces;
  pieces.reserve(factor);
  int64_t offset = chunk.region.offsets[axis];
  for (int i = 0; i < factor; ++i) {
    Chunk piece = chunk;
    const int64_t size = base + (i < extra ? 1 : 0);
    piece.region.offsets[axis] = offset;
    piece.region.sizes[axis] = size;
    piece.chunk_id = chunk.chunk_id + "." + std::to_string(i);
    offset += size;
    pieces.push_back(std::move(piece));
  }
  return pieces;
}

Chunk merge_chunks(const std::vector<Chunk>& pieces, int axis) {
  if (pieces.empty()) throw Error("merge of zero chunks");
  Chunk merged = pieces.front();
  for (size_t i = 1; i < pieces.size(); ++i) {
    const Region& r = pieces[i].region;
    const Region& m = merged.region;
    bool ok = r.tensor_id == m.tensor_id && r.dims() == m.dims() &&
              r.offsets[axis] == m.offsets[axis] + m.sizes[axis];
    for (int d = 0; ok && d < r.dims(); ++d) {
      if (d == axis) continue;
      ok = r.offsets[d] == m.offsets[d] && r.sizes[d] == m.sizes[d];
    }
    if (!ok) {
      throw Error("chunks " + to_string(m) + " and " + to_string(r) +
                  " do not abut along axis " + std::to_string(axis));
    }
    merged.region.sizes[axis] += r.sizes[axis];
  }
  const auto dot = merged.chunk_id.rfind('.');
  if (dot != std::string::npos) merged.chunk_id.resize(dot);
  return merged;
}

std::vector<Chunk> split_contiguous(const Chunk& chunk,
                                    const std::vector<int64_t>& shape) {
  const Region& r = chunk.region;
  if (is_contiguous(r, shape)) return {chunk};
  const int n = r.dims();
  int last_partial = n - 1;
  while (last_partial >= 0 && r.sizes[last_partial] == shape[last_partial]) {
    --last_partial;
  }
  // Axes before `last_partial` are peeled into single-index slices.
  std::vector<Chunk> out;
  std::vector<int64_t> idx(last_partial, 0);
  int64_t count = 1;
  for (int d = 0; d < last_partial; ++d) count *= r.sizes[d];
  for (int64_t e = 0; e < count; ++e) {
    Chunk piece = chunk;
    for (int d = 0; d < last_partial; ++d) {
      piece.region.offsets[d] = r.offsets[d] + idx[d];
      piece.region.sizes[d] = 1;
    }
    piece.chunk_id = chunk.chunk_id + "#" + std::to_string(e);
    out.push_back(std::move(piece));
    for (int d = last_partial - 1; d >= 0; --d) {
      if (++idx[d] < r.sizes[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace chunksched
