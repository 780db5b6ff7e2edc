// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/templates.hpp"

#include "chunksched/error.hpp"

namespace chunksched {

namespace {

int mod(int a, int w) { return ((a % w) + w) % w; }

Region pattern_region(const TemplateParams& p) {
  return p.region ? *p.region : full_region(p.tensor);
}

CommSchedule base_schedule(const TemplateParams& p) {
  CommSchedule s = empty_schedule(p.world_size);
  s.tensors[p.tensor.id] = p.tensor;
  return s;
}

CommSchedule finish(CommSchedule s, const TemplateParams& p) {
  if (p.pipeline_stages > 1) {
    return split_schedule(s, p.pipeline_stages, p.axis, p.remainder);
  }
  return s;
}

CommOp p2p(Direction dir, int peer, const Chunk& src, const Chunk& dst,
           bool accumulate = false, std::vector<Dependency> deps = {}) {
  return CommOp{P2P{dir, peer, src, dst, accumulate}, std::move(deps)};
}

}  // namespace

void check_params(const TemplateParams& p) {
  if (p.world_size < 1) throw Error("world_size must be positive");
  const auto problems = check_tensor(p.tensor);
  if (!problems.empty()) throw Error(problems.front());
  if (p.axis < 0 || p.axis >= static_cast<int>(p.tensor.shape.size())) {
    throw Error("sharding axis " + std::to_string(p.axis) + " out of range");
  }
  const Region r = pattern_region(p);
  const auto region_problems = check_region(r, p.tensor);
  if (!region_problems.empty()) throw Error(region_problems.front());
  const int64_t extent = r.sizes[p.axis];
  if (extent < p.world_size ||
      (p.remainder == RemainderRule::strict && extent % p.world_size != 0)) {
    throw Error("indivisible split: axis extent " + std::to_string(extent) +
                " over world_size " + std::to_string(p.world_size));
  }
  if (p.mesh && p.mesh->intra * p.mesh->inter != p.world_size) {
    throw Error("mesh " + std::to_string(p.mesh->intra) + "x" +
                std::to_string(p.mesh->inter) + " does not match world_size " +
                std::to_string(p.world_size));
  }
  if (p.pipeline_stages < 1) throw Error("pipeline_stages must be >= 1");
}

Chunk template_shard(const TemplateParams& p, int j) {
  Chunk whole{pattern_region(p), Layout::row_major, p.tensor.id};
  return split_chunk(whole, p.axis, p.world_size, p.remainder).at(j);
}

CommSchedule ring_allgather(const TemplateParams& p) {
  check_params(p);
  const int W = p.world_size;
  CommSchedule s = base_schedule(p);
  for (int r = 0; r < W; ++r) {
    s.owner_regions[r].push_back(template_shard(p, r).region);
    for (int k = 0; k + 1 < W; ++k) {
      const Chunk shard = template_shard(p, mod(r - k, W));
      std::vector<Dependency> deps;
      if (k > 0) deps.push_back({mod(r - 1, W), k - 1});
      s.plans[r].push_back(
          p2p(Direction::push, mod(r + 1, W), shard, shard, false, deps));
    }
  }
  return finish(std::move(s), p);
}

CommSchedule allgather_1d_swizzle(const TemplateParams& p) {
  check_params(p);
  const int W = p.world_size;
  CommSchedule s = base_schedule(p);
  for (int r = 0; r < W; ++r) {
    s.owner_regions[r].push_back(template_shard(p, r).region);
    for (int i = 0; i < W; ++i) {
      const int peer = (i + r) % W;
      if (peer == r) continue;
      const Chunk shard = template_shard(p, peer);
      s.plans[r].push_back(p2p(Direction::pull, peer, shard, shard));
    }
  }
  return finish(std::move(s), p);
}

CommSchedule allgather_2d_swizzle(const TemplateParams& p) {
  if (!p.mesh) throw Error("allgather_2d_swizzle needs a mesh");
  check_params(p);
  const int W = p.world_size;
  const int I = p.mesh->intra;
  const int E = p.mesh->inter;
  CommSchedule s = base_schedule(p);
  for (int r = 0; r < W; ++r) {
    const int g = r / I;
    const int l = r % I;
    s.owner_regions[r].push_back(template_shard(p, r).region);
    // Intra-group swizzle: pull each local peer's own shard.
    for (int i = 1; i < I; ++i) {
      const int peer = g * I + (l + i) % I;
      const Chunk shard = template_shard(p, peer);
      s.plans[r].push_back(p2p(Direction::pull, peer, shard, shard));
    }
    // Inter-group exchange with the same local position in every other
    // group. Shards the peer gathered itself are forwarded once its intra
    // pull has landed.
    for (int e = 1; e < E; ++e) {
      const int g2 = (g + e) % E;
      const int peer = g2 * I + l;
      for (int l2 = 0; l2 < I; ++l2) {
        const int owner = g2 * I + l2;
        const Chunk shard = template_shard(p, owner);
        std::vector<Dependency> deps;
        if (l2 != l) deps.push_back({peer, mod(l2 - l, I) - 1});
        s.plans[r].push_back(
            p2p(Direction::pull, peer, shard, shard, false, deps));
      }
    }
  }
  return finish(std::move(s), p);
}

CommSchedule reduce_scatter(const TemplateParams& p) {
  check_params(p);
  const int W = p.world_size;
  CommSchedule s = base_schedule(p);
  for (int r = 0; r < W; ++r) {
    s.owner_regions[r].push_back(pattern_region(p));
    for (int i = 1; i < W; ++i) {
      const int j = (r + i) % W;
      const Chunk shard = template_shard(p, j);
      s.plans[r].push_back(p2p(Direction::push, j, shard, shard, true));
    }
  }
  return finish(std::move(s), p);
}

CommSchedule partition_allreduce(const TemplateParams& p) {
  check_params(p);
  const int W = p.world_size;
  CommSchedule s = reduce_scatter(TemplateParams{
      p.world_size, p.tensor, p.axis, p.mesh, 1, p.region, p.remainder});
  for (int r = 0; r < W; ++r) {
    // Every contribution into this rank's home shard, in source order.
    std::vector<Dependency> receipts;
    for (int q = 0; q < W; ++q) {
      if (q != r) receipts.push_back({q, mod(r - q, W) - 1});
    }
    const Chunk home = template_shard(p, r);
    for (int i = 1; i < W; ++i) {
      s.plans[r].push_back(
          p2p(Direction::push, (r + i) % W, home, home, false, receipts));
    }
  }
  return finish(std::move(s), p);
}

CommSchedule all_to_all(const TemplateParams& p, int dst_axis) {
  check_params(p);
  TemplateParams q = p;
  q.axis = dst_axis;
  check_params(q);
  const int W = p.world_size;
  CommSchedule s = base_schedule(p);
  for (int r = 0; r < W; ++r) {
    s.owner_regions[r].push_back(template_shard(p, r).region);
    const Region want = template_shard(q, r).region;
    for (int i = 1; i < W; ++i) {
      const int peer = (r + i) % W;
      auto cut = intersect(template_shard(p, peer).region, want);
      if (!cut) continue;
      const Chunk c{*cut, Layout::row_major,
                    p.tensor.id + ".x" + std::to_string(peer) + "." +
                        std::to_string(r)};
      s.plans[r].push_back(p2p(Direction::pull, peer, c, c));
    }
  }
  return finish(std::move(s), p);
}

const std::vector<std::string>& template_names() {
  static const std::vector<std::string> names = {
      "ring_allgather", "allgather_1d_swizzle", "allgather_2d_swizzle",
      "reduce_scatter", "partition_allreduce"};
  return names;
}

CommSchedule make_template(const std::string& name, const TemplateParams& p) {
  if (name == "ring_allgather") return ring_allgather(p);
  if (name == "allgather_1d_swizzle") return allgather_1d_swizzle(p);
  if (name == "allgather_2d_swizzle") return allgather_2d_swizzle(p);
  if (name == "reduce_scatter") return reduce_scatter(p);
  if (name == "partition_allreduce") return partition_allreduce(p);
  throw Error("unknown template '" + name + "'");
}

}  // namespace chunksched
