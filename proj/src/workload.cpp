// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/workload.hpp"

#include <algorithm>
#include <set>

#include "chunksched/error.hpp"

namespace chunksched {

std::map<std::string, TensorSpec> workload_tensors(const Workload& w) {
  std::map<std::string, TensorSpec> out = w.schedule.tensors;
  if (!w.program) return out;
  for (const TensorSpec& t : w.program->tensors()) {
    auto [it, inserted] = out.emplace(t.id, t);
    if (!inserted && it->second.shape != t.shape) {
      throw Error("tensor " + t.id +
                  " has different shapes in the schedule and the kernel");
    }
  }
  return out;
}

InitialState initial_state(const Workload& w, int rank) {
  InitialState st;
  if (rank < static_cast<int>(w.schedule.owner_regions.size())) {
    st.valid = w.schedule.owner_regions[rank];
  }
  if (!w.program) return st;
  std::set<std::string> written;
  for (const auto& a : w.program->accesses) {
    if (a.write) written.insert(a.tensor_id);
  }
  for (const TensorSpec& t : w.program->tensors()) {
    if (written.count(t.id)) {
      st.produced.push_back(full_region(t));
    } else if (!w.schedule.tensors.count(t.id)) {
      st.valid.push_back(full_region(t));
    }
  }
  return st;
}

std::vector<int64_t> tiles_touching(const TileProgram& p,
                                    const TileAccess& access,
                                    const Region& region) {
  if (region.tensor_id != access.tensor_id ||
      static_cast<int>(access.dims.size()) != region.dims()) {
    return {};
  }
  // Per spatial axis, the inclusive coordinate range that can intersect.
  std::vector<std::pair<int64_t, int64_t>> range;
  for (const auto& name : p.spatial) {
    range.push_back({0, p.axis(name).tiles() - 1});
  }
  const Region any = p.region(access, 0);
  for (size_t d = 0; d < access.dims.size(); ++d) {
    const int64_t lo = region.offsets[d];
    const int64_t hi = lo + region.sizes[d];  // exclusive
    auto it = std::find(p.spatial.begin(), p.spatial.end(), access.dims[d]);
    if (it == p.spatial.end()) {
      // Full-extent dim: every tile covers [0, extent).
      if (hi <= any.offsets[d] || lo >= any.offsets[d] + any.sizes[d]) {
        return {};
      }
      continue;
    }
    const size_t k = it - p.spatial.begin();
    const int64_t block = p.axis(*it).block;
    range[k].first = std::max(range[k].first, lo / block);
    range[k].second = std::min(range[k].second, (hi - 1) / block);
    if (range[k].first > range[k].second) return {};
  }
  std::vector<int64_t> out;
  std::vector<int64_t> c(range.size());
  for (size_t k = 0; k < range.size(); ++k) c[k] = range[k].first;
  for (;;) {
    out.push_back(p.tile_id(c));
    int k = static_cast<int>(range.size()) - 1;
    for (; k >= 0; --k) {
      if (++c[k] <= range[k].second) break;
      c[k] = range[k].first;
    }
    if (k < 0) break;
  }
  return out;
}

}  // namespace chunksched
