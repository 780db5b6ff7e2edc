// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/schedule.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "chunksched/error.hpp"

namespace chunksched {

std::string to_string(const OpRef& ref) {
  return "(" + std::to_string(ref.rank) + "," + std::to_string(ref.index) +
         ")";
}

const char* to_string(Direction direction) {
  return direction == Direction::push ? "push" : "pull";
}

const char* to_string(CollectiveType type) {
  switch (type) {
    case CollectiveType::allgather: return "allgather";
    case CollectiveType::reduce_scatter: return "reduce_scatter";
    case CollectiveType::allreduce: return "allreduce";
    case CollectiveType::all_to_all: return "all_to_all";
  }
  return "?";
}

Direction direction_from_string(const std::string& name) {
  if (name == "push") return Direction::push;
  if (name == "pull") return Direction::pull;
  throw ParseError("unknown P2P direction '" + name + "'");
}

CollectiveType collective_from_string(const std::string& name) {
  if (name == "allgather") return CollectiveType::allgather;
  if (name == "reduce_scatter") return CollectiveType::reduce_scatter;
  if (name == "allreduce") return CollectiveType::allreduce;
  if (name == "all_to_all") return CollectiveType::all_to_all;
  throw ParseError("unknown collective type '" + name + "'");
}

const Chunk& CommOp::src_chunk() const {
  return is_p2p() ? p2p().src_chunk : collective().src_chunk;
}

const Chunk& CommOp::dst_chunk() const {
  return is_p2p() ? p2p().dst_chunk : collective().dst_chunk;
}

bool CommOp::accumulates() const {
  if (is_p2p()) return p2p().accumulate;
  const auto t = collective().collective_type;
  return t == CollectiveType::reduce_scatter || t == CollectiveType::allreduce;
}

const TensorSpec& CommSchedule::tensor(const std::string& id) const {
  auto it = tensors.find(id);
  if (it == tensors.end()) throw Error("unknown tensor '" + id + "'");
  return it->second;
}

size_t CommSchedule::op_count() const {
  size_t n = 0;
  for (const auto& plan : plans) n += plan.size();
  return n;
}

std::vector<OpRef> CommSchedule::all_ops() const {
  std::vector<OpRef> refs;
  for (int r = 0; r < static_cast<int>(plans.size()); ++r) {
    for (int i = 0; i < static_cast<int>(plans[r].size()); ++i) {
      refs.push_back({r, i});
    }
  }
  return refs;
}

CommSchedule empty_schedule(int world_size) {
  CommSchedule s;
  s.world_size = world_size;
  s.plans.resize(world_size);
  s.owner_regions.resize(world_size);
  return s;
}

bool ValidationReport::has(const std::string& code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.code == code; });
}

std::vector<std::vector<OpRef>> collective_groups(const CommSchedule& s) {
  // Key: participant set -> per-rank list of that set's collectives.
  std::map<std::vector<int>, std::map<int, std::vector<int>>> by_set;
  for (int r = 0; r < static_cast<int>(s.plans.size()); ++r) {
    for (int i = 0; i < static_cast<int>(s.plans[r].size()); ++i) {
      const CommOp& op = s.plans[r][i];
      if (op.is_p2p()) continue;
      std::vector<int> set = op.collective().ranks;
      std::sort(set.begin(), set.end());
      by_set[set][r].push_back(i);
    }
  }
  std::vector<std::vector<OpRef>> groups;
  for (const auto& [set, per_rank] : by_set) {
    size_t rounds = 0;
    for (const auto& [r, list] : per_rank) rounds = std::max(rounds, list.size());
    for (size_t n = 0; n < rounds; ++n) {
      std::vector<OpRef> group;
      for (int member : set) {
        auto it = per_rank.find(member);
        if (it != per_rank.end() && n < it->second.size()) {
          group.push_back({member, it->second[n]});
        }
      }
      groups.push_back(std::move(group));
    }
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

namespace {

void add(ValidationReport& report, std::string code, std::string message) {
  report.violations.push_back({std::move(code), std::move(message)});
}

void check_chunk(ValidationReport& report, const CommSchedule& s,
                 const Chunk& chunk, const std::string& where) {
  auto it = s.tensors.find(chunk.region.tensor_id);
  if (it == s.tensors.end()) {
    add(report, "unknown_tensor",
        where + " references unknown tensor '" + chunk.region.tensor_id + "'");
    return;
  }
  for (const auto& problem : check_region(chunk.region, it->second)) {
    add(report, "region_out_of_bounds", where + ": " + problem);
  }
}

bool chunk_ok(const CommSchedule& s, const Chunk& c) {
  auto it = s.tensors.find(c.region.tensor_id);
  return it != s.tensors.end() && check_region(c.region, it->second).empty();
}

// Completion-before-start graph over ops plus one node per collective group.
// A collective member "completes" when its whole group does.
struct OrderGraph {
  std::vector<OpRef> refs;
  std::map<OpRef, int> node_of;
  std::vector<int> group_of_node;  // -1 for non-members
  int group_base = 0;
  std::vector<std::vector<int>> succ;

  int completion(int node) const {
    return group_of_node[node] >= 0 ? group_base + group_of_node[node] : node;
  }
};

OrderGraph build_order_graph(const CommSchedule& s) {
  OrderGraph g;
  g.refs = s.all_ops();
  for (size_t n = 0; n < g.refs.size(); ++n) g.node_of[g.refs[n]] = n;
  g.group_of_node.assign(g.refs.size(), -1);
  const auto groups = collective_groups(s);
  for (size_t k = 0; k < groups.size(); ++k) {
    for (const OpRef& m : groups[k]) g.group_of_node[g.node_of[m]] = k;
  }
  g.group_base = static_cast<int>(g.refs.size());
  g.succ.resize(g.refs.size() + groups.size());
  for (size_t k = 0; k < groups.size(); ++k) {
    for (const OpRef& m : groups[k]) {
      g.succ[g.node_of[m]].push_back(g.group_base + k);
    }
  }
  for (size_t n = 0; n < g.refs.size(); ++n) {
    const OpRef& ref = g.refs[n];
    const CommOp& op = s.op(ref);
    for (const Dependency& d : op.deps) {
      auto it = g.node_of.find(d);
      if (it == g.node_of.end()) continue;
      g.succ[g.completion(it->second)].push_back(n);
    }
    if (ref.index > 0) {
      const int prev = g.node_of[{ref.rank, ref.index - 1}];
      g.succ[g.completion(prev)].push_back(n);
    }
  }
  return g;
}

std::string node_name(const OrderGraph& g, int node) {
  if (node < g.group_base) return to_string(g.refs[node]);
  return "collective#" + std::to_string(node - g.group_base);
}

// Returns a cycle as a node path (first == last), or empty.
std::vector<int> find_cycle(const OrderGraph& g) {
  const int n = static_cast<int>(g.succ.size());
  std::vector<int> color(n, 0), parent(n, -1);
  for (int root = 0; root < n; ++root) {
    if (color[root]) continue;
    // Iterative DFS with explicit edge cursors.
    std::vector<std::pair<int, size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [v, cursor] = stack.back();
      if (cursor < g.succ[v].size()) {
        const int w = g.succ[v][cursor++];
        if (color[w] == 0) {
          color[w] = 1;
          parent[w] = v;
          stack.push_back({w, 0});
        } else if (color[w] == 1) {
          std::vector<int> cycle{w};
          for (int x = v; x != w; x = parent[x]) cycle.push_back(x);
          cycle.push_back(w);
          std::reverse(cycle.begin(), cycle.end());
          return cycle;
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

}  // namespace

ValidationReport validate_schedule(const CommSchedule& s) {
  ValidationReport report;
  const int W = s.world_size;
  if (W < 1) {
    add(report, "world_size", "world_size must be positive");
    return report;
  }
  if (static_cast<int>(s.plans.size()) != W) {
    add(report, "plan_count",
        "expected " + std::to_string(W) + " plans, found " +
            std::to_string(s.plans.size()));
    return report;
  }
  if (!s.owner_regions.empty() &&
      static_cast<int>(s.owner_regions.size()) != W) {
    add(report, "owner_region_count",
        "owner_regions must list every rank");
  }
  for (const auto& [id, tensor] : s.tensors) {
    if (id != tensor.id) {
      add(report, "tensor_id", "tensor key '" + id + "' != id '" + tensor.id +
                                   "'");
    }
    for (const auto& problem : check_tensor(tensor)) {
      add(report, "bad_tensor", problem);
    }
  }
  for (size_t r = 0; r < s.owner_regions.size(); ++r) {
    for (const Region& region : s.owner_regions[r]) {
      check_chunk(report, s, Chunk{region, Layout::row_major, ""},
                  "owner region of rank " + std::to_string(r));
    }
  }

  std::map<std::string, Chunk> chunk_ids;
  auto note_chunk_id = [&](const Chunk& c, const std::string& where) {
    if (c.chunk_id.empty()) return;
    auto [it, inserted] = chunk_ids.emplace(c.chunk_id, c);
    if (!inserted && !(it->second == c)) {
      add(report, "chunk_id_conflict",
          where + ": chunk id '" + c.chunk_id +
              "' reused for a different description");
    }
  };

  bool deps_resolve = true;
  for (int r = 0; r < W; ++r) {
    for (int i = 0; i < static_cast<int>(s.plans[r].size()); ++i) {
      const CommOp& op = s.plans[r][i];
      const std::string where = "op " + to_string(OpRef{r, i});
      check_chunk(report, s, op.src_chunk(), where + " src");
      check_chunk(report, s, op.dst_chunk(), where + " dst");
      note_chunk_id(op.src_chunk(), where);
      note_chunk_id(op.dst_chunk(), where);
      if (op.is_p2p()) {
        const P2P& p = op.p2p();
        if (p.peer < 0 || p.peer >= W) {
          add(report, "invalid_peer",
              where + " names peer " + std::to_string(p.peer));
        }
        if (chunk_ok(s, p.src_chunk) && chunk_ok(s, p.dst_chunk)) {
          const int64_t a =
              byte_volume(p.src_chunk.region, s.tensor(p.src_chunk.region.tensor_id));
          const int64_t b =
              byte_volume(p.dst_chunk.region, s.tensor(p.dst_chunk.region.tensor_id));
          if (a != b) {
            add(report, "p2p_volume_mismatch",
                where + ": P2P volume mismatch (" + std::to_string(a) +
                    " bytes from " + to_string(p.src_chunk.region) + " vs " +
                    std::to_string(b) + " bytes into " +
                    to_string(p.dst_chunk.region) + ")");
          }
        }
      } else {
        const Collective& c = op.collective();
        std::set<int> seen;
        bool ranks_ok = !c.ranks.empty();
        for (int m : c.ranks) {
          if (m < 0 || m >= W || !seen.insert(m).second) ranks_ok = false;
        }
        if (!ranks_ok) {
          add(report, "collective_ranks",
              where + " has an invalid participant list");
        }
        if (!seen.count(r)) {
          add(report, "collective_issuer",
              where + ": issuing rank is not a participant");
        }
        if (c.src_chunk.region.tensor_id != c.dst_chunk.region.tensor_id) {
          add(report, "collective_tensor_mismatch",
              where + ": collective src and dst must share a tensor");
        }
      }
      for (const Dependency& d : op.deps) {
        if (d.rank < 0 || d.rank >= W || d.index < 0 ||
            d.index >= static_cast<int>(s.plans[d.rank].size())) {
          add(report, "dangling_dependency",
              where + " depends on missing op " + to_string(d));
          deps_resolve = false;
        }
      }
    }
  }

  for (const auto& group : collective_groups(s)) {
    const CommOp& first = s.op(group.front());
    std::vector<int> expect = first.collective().ranks;
    std::sort(expect.begin(), expect.end());
    std::vector<int> members;
    for (const OpRef& m : group) members.push_back(m.rank);
    bool consistent = members == expect;
    for (const OpRef& m : group) {
      if (s.op(m).collective().collective_type !=
          first.collective().collective_type) {
        consistent = false;
      }
    }
    if (!consistent) {
      add(report, "collective_unmatched",
          "collective issued by " + to_string(group.front()) +
              " is not matched by every participant");
    }
  }

  if (deps_resolve) {
    const OrderGraph g = build_order_graph(s);
    const auto cycle = find_cycle(g);
    if (!cycle.empty()) {
      std::string path;
      for (size_t k = 0; k < cycle.size(); ++k) {
        if (k) path += " -> ";
        path += node_name(g, cycle[k]);
      }
      add(report, "dependence_cycle", "dependence cycle: " + path);
    }
  }
  return report;
}

std::vector<OpRef> global_order(const CommSchedule& s) {
  const auto refs = s.all_ops();
  std::map<OpRef, std::vector<OpRef>> succ;
  std::map<OpRef, int> indegree;
  for (const OpRef& ref : refs) indegree[ref] = 0;
  auto edge = [&](const OpRef& from, const OpRef& to) {
    succ[from].push_back(to);
    ++indegree[to];
  };
  for (const OpRef& ref : refs) {
    for (const Dependency& d : s.op(ref).deps) {
      if (!indegree.count(d)) {
        throw Error("op " + to_string(ref) + " depends on missing op " +
                    to_string(d));
      }
      edge(d, ref);
    }
    if (ref.index > 0) edge({ref.rank, ref.index - 1}, ref);
  }
  std::priority_queue<OpRef, std::vector<OpRef>, std::greater<>> ready;
  for (const auto& [ref, deg] : indegree) {
    if (deg == 0) ready.push(ref);
  }
  std::vector<OpRef> order;
  order.reserve(refs.size());
  while (!ready.empty()) {
    const OpRef ref = ready.top();
    ready.pop();
    order.push_back(ref);
    for (const OpRef& next : succ[ref]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  if (order.size() != refs.size()) {
    throw Error("dependence cycle: global order does not exist");
  }
  return order;
}

std::vector<std::vector<std::vector<Access>>> op_accesses(
    const CommSchedule& s) {
  std::vector<std::vector<std::vector<Access>>> out(s.plans.size());
  for (size_t r = 0; r < s.plans.size(); ++r) out[r].resize(s.plans[r].size());

  for (const OpRef& ref : s.all_ops()) {
    const CommOp& op = s.op(ref);
    if (!op.is_p2p()) continue;
    const P2P& p = op.p2p();
    const AccessKind wk = p.accumulate ? AccessKind::accumulate
                                       : AccessKind::write;
    auto& list = out[ref.rank][ref.index];
    const int src_rank = p.direction == Direction::push ? ref.rank : p.peer;
    const int dst_rank = p.direction == Direction::push ? p.peer : ref.rank;
    list.push_back({src_rank, p.src_chunk.region, AccessKind::read});
    list.push_back({dst_rank, p.dst_chunk.region, wk});
  }
  for (const auto& group : collective_groups(s)) {
    for (const OpRef& m : group) {
      const Collective& c = s.op(m).collective();
      auto& list = out[m.rank][m.index];
      list.push_back({m.rank, c.src_chunk.region, AccessKind::read});
      switch (c.collective_type) {
        case CollectiveType::allgather:
        case CollectiveType::all_to_all:
          for (const OpRef& q : group) {
            const auto& src_q = s.op(q).collective().src_chunk.region;
            if (auto cut = intersect(src_q, c.dst_chunk.region)) {
              list.push_back({m.rank, *cut, AccessKind::write});
            }
          }
          break;
        case CollectiveType::reduce_scatter:
        case CollectiveType::allreduce:
          list.push_back({m.rank, c.dst_chunk.region, AccessKind::write});
          break;
      }
    }
  }
  return out;
}

std::vector<int> source_ranks(const CommSchedule& s, const OpRef& ref) {
  const CommOp& op = s.op(ref);
  if (op.is_p2p()) {
    const P2P& p = op.p2p();
    return {p.direction == Direction::push ? ref.rank : p.peer};
  }
  std::vector<int> ranks = op.collective().ranks;
  std::sort(ranks.begin(), ranks.end());
  return ranks;
}

namespace {

bool conflicts(const std::vector<Access>& a, const std::vector<Access>& b) {
  for (const Access& x : a) {
    for (const Access& y : b) {
      if (x.rank != y.rank) continue;
      if (x.kind == AccessKind::read && y.kind == AccessKind::read) continue;
      if (overlaps(x.region, y.region)) return true;
    }
  }
  return false;
}

}  // namespace

CommSchedule split_schedule(const CommSchedule& s, int factor, int axis,
                            RemainderRule rule) {
  if (factor < 1) throw Error("split factor must be >= 1");
  if (factor == 1) return s;
  CommSchedule out = s;
  // first[r][i] = index of op (r,i)'s first sub-op; sub-ops are contiguous.
  std::vector<std::vector<int>> first(s.plans.size());
  std::vector<std::vector<int>> count(s.plans.size());
  for (size_t r = 0; r < s.plans.size(); ++r) {
    out.plans[r].clear();
    for (const CommOp& op : s.plans[r]) {
      first[r].push_back(static_cast<int>(out.plans[r].size()));
      std::vector<CommOp> pieces;
      if (op.is_p2p()) {
        const auto src = split_chunk(op.p2p().src_chunk, axis, factor, rule);
        const auto dst = split_chunk(op.p2p().dst_chunk, axis, factor, rule);
        for (int k = 0; k < factor; ++k) {
          CommOp piece{op.p2p(), {}};
          piece.p2p().src_chunk = src[k];
          piece.p2p().dst_chunk = dst[k];
          pieces.push_back(std::move(piece));
        }
      } else {
        const Collective& c = op.collective();
        const bool split_src = c.collective_type != CollectiveType::reduce_scatter;
        const bool split_dst = c.collective_type == CollectiveType::reduce_scatter ||
                               c.collective_type == CollectiveType::allreduce;
        std::vector<Chunk> src(factor, c.src_chunk), dst(factor, c.dst_chunk);
        if (split_src) src = split_chunk(c.src_chunk, axis, factor, rule);
        if (split_dst) dst = split_chunk(c.dst_chunk, axis, factor, rule);
        for (int k = 0; k < factor; ++k) {
          CommOp piece{c, {}};
          piece.collective().src_chunk = src[k];
          piece.collective().dst_chunk = dst[k];
          pieces.push_back(std::move(piece));
        }
      }
      count[r].push_back(factor);
      for (auto& piece : pieces) out.plans[r].push_back(std::move(piece));
    }
  }

  const auto access = op_accesses(out);
  for (size_t r = 0; r < s.plans.size(); ++r) {
    for (size_t i = 0; i < s.plans[r].size(); ++i) {
      for (int k = 0; k < count[r][i]; ++k) {
        CommOp& piece = out.plans[r][first[r][i] + k];
        const auto& mine = access[r][first[r][i] + k];
        for (const Dependency& d : s.plans[r][i].deps) {
          std::vector<Dependency> hits;
          for (int j = 0; j < count[d.rank][d.index]; ++j) {
            const int idx = first[d.rank][d.index] + j;
            if (conflicts(access[d.rank][idx], mine)) {
              hits.push_back({d.rank, idx});
            }
          }
          if (hits.empty()) {
            // Pure ordering edge: keep it against every sub-op.
            for (int j = 0; j < count[d.rank][d.index]; ++j) {
              hits.push_back({d.rank, first[d.rank][d.index] + j});
            }
          }
          piece.deps.insert(piece.deps.end(), hits.begin(), hits.end());
        }
      }
    }
  }
  return out;
}

CommSchedule concat_schedules(const CommSchedule& a, const CommSchedule& b) {
  if (a.world_size != b.world_size) {
    throw Error("cannot concatenate schedules over different world sizes");
  }
  CommSchedule out = a;
  for (const auto& [id, tensor] : b.tensors) {
    auto [it, inserted] = out.tensors.emplace(id, tensor);
    if (!inserted && !(it->second == tensor)) {
      throw Error("tensor '" + id + "' declared twice with different specs");
    }
  }
  out.plans.resize(a.world_size);
  out.owner_regions.resize(a.world_size);
  std::vector<int> shift(a.world_size, 0);
  for (int r = 0; r < a.world_size; ++r) {
    shift[r] = static_cast<int>(r < static_cast<int>(a.plans.size())
                                    ? a.plans[r].size()
                                    : 0);
  }
  for (int r = 0; r < b.world_size; ++r) {
    if (r >= static_cast<int>(b.plans.size())) break;
    for (CommOp op : b.plans[r]) {
      for (Dependency& d : op.deps) d.index += shift[d.rank];
      out.plans[r].push_back(std::move(op));
    }
    if (r < static_cast<int>(b.owner_regions.size())) {
      for (const Region& region : b.owner_regions[r]) {
        auto& owned = out.owner_regions[r];
        if (std::find(owned.begin(), owned.end(), region) == owned.end()) {
          owned.push_back(region);
        }
      }
    }
  }
  return out;
}

}  // namespace chunksched
