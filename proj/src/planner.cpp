// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/planner.hpp"

#include <algorithm>
#include <climits>
#include <functional>
#include <regex>
#include <set>
#include <sstream>
#include <tuple>

#include "chunksched/error.hpp"

namespace chunksched {

const char* to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::chunk_before_tile: return "chunk_before_tile";
    case EdgeKind::tile_before_chunk: return "tile_before_chunk";
    case EdgeKind::chunk_before_chunk: return "chunk_before_chunk";
  }
  return "?";
}

namespace {

void sort_unique(std::vector<int64_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Cycle search over ops where an edge o -> o' means o' cannot start before
// o completes: explicit deps, and tiles that consume o while feeding o'.
void check_acyclic(const DepGraph& g, const CommSchedule& s) {
  std::map<OpRef, std::set<OpRef>> succ;
  for (const OpRef& o : g.ops) {
    for (const Dependency& d : s.op(o).deps) succ[d].insert(o);
  }
  std::map<int64_t, std::vector<OpRef>> into, out_of;
  for (const auto& [op, tiles] : g.consumers) {
    for (int64_t t : tiles) into[t].push_back(op);
  }
  for (const auto& [op, tiles] : g.producers) {
    for (int64_t t : tiles) out_of[t].push_back(op);
  }
  for (const auto& [t, ins] : into) {
    auto it = out_of.find(t);
    if (it == out_of.end()) continue;
    for (const OpRef& a : ins) {
      for (const OpRef& b : it->second) {
        if (a == b) {
          throw Error("unschedulable dependence: tile " + std::to_string(t) +
                      " both consumes and feeds op " + to_string(a));
        }
        succ[a].insert(b);
      }
    }
  }
  std::map<OpRef, int> color;
  std::function<void(const OpRef&)> dfs = [&](const OpRef& v) {
    color[v] = 1;
    for (const OpRef& w : succ[v]) {
      if (color[w] == 1) {
        throw Error("unschedulable dependence through ops " + to_string(v) +
                    " and " + to_string(w));
      }
      if (color[w] == 0) dfs(w);
    }
    color[v] = 2;
  };
  for (const OpRef& o : g.ops) {
    if (color[o] == 0) dfs(o);
  }
}

}  // namespace

DepGraph build_depgraph(const Workload& w, int rank) {
  const CommSchedule& s = w.schedule;
  DepGraph g;
  g.rank = rank;
  g.ops = s.all_ops();
  g.tile_count = w.program ? w.program->tile_count() : 0;
  const auto acc = op_accesses(s);
  for (const OpRef& o : g.ops) {
    bool lands_here = false;
    for (const Access& a : acc[o.rank][o.index]) {
      if (a.rank != rank) continue;
      const bool reads = a.kind == AccessKind::read;
      if (!reads) lands_here = true;
      if (!w.program) continue;
      for (const TileAccess& ta : w.program->accesses) {
        // Incoming data feeds tile reads; outgoing data comes from tile
        // writes. A tile writing where an op lands must also finish first,
        // or its store would clobber the received data.
        if (reads && !ta.write) continue;
        auto tiles = tiles_touching(*w.program, ta, a.region);
        auto& dst = (reads || ta.write) ? g.producers[o] : g.consumers[o];
        dst.insert(dst.end(), tiles.begin(), tiles.end());
      }
    }
    if (lands_here) g.incoming.push_back(o);
  }
  for (auto* m : {&g.consumers, &g.producers}) {
    for (auto it = m->begin(); it != m->end();) {
      sort_unique(it->second);
      it = it->second.empty() ? m->erase(it) : std::next(it);
    }
  }
  for (const auto& [op, tiles] : g.consumers) {
    for (int64_t t : tiles) {
      g.edges.push_back({EdgeKind::chunk_before_tile, op, t, {}});
    }
  }
  for (const auto& [op, tiles] : g.producers) {
    for (int64_t t : tiles) {
      g.edges.push_back({EdgeKind::tile_before_chunk, op, t, {}});
    }
  }
  for (const OpRef& o : g.ops) {
    for (const Dependency& d : s.op(o).deps) {
      g.edges.push_back({EdgeKind::chunk_before_chunk, o, -1, d});
    }
  }
  check_acyclic(g, s);
  return g;
}

std::string depgraph_to_dot(const DepGraph& g) {
  std::ostringstream os;
  os << "digraph rank" << g.rank << " {\n";
  auto op_name = [](const OpRef& o) {
    return "\"op" + std::to_string(o.rank) + "_" + std::to_string(o.index) +
           "\"";
  };
  for (const DepEdge& e : g.edges) {
    const std::string tile = "\"t" + std::to_string(e.tile) + "\"";
    switch (e.kind) {
      case EdgeKind::chunk_before_tile:
        os << "  " << op_name(e.op) << " -> " << tile;
        break;
      case EdgeKind::tile_before_chunk:
        os << "  " << tile << " -> " << op_name(e.op);
        break;
      case EdgeKind::chunk_before_chunk:
        os << "  " << op_name(e.from_op) << " -> " << op_name(e.op);
        break;
    }
    os << " [label=\"" << to_string(e.kind) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

IntraPolicy intra_from_string(const std::string& text) {
  if (text == "row_major") return {IntraPolicy::Kind::row_major, 1};
  if (text == "col_major") return {IntraPolicy::Kind::col_major, 1};
  static const std::regex grouped(R"(grouped[(:](\d+)\)?)");
  std::smatch m;
  if (std::regex_match(text, m, grouped)) {
    const int g = std::stoi(m[1]);
    if (g < 1) throw ParseError("grouped policy needs a positive width");
    return {IntraPolicy::Kind::grouped, g};
  }
  throw ParseError("unknown intra-chunk policy '" + text + "'");
}

std::string to_string(const IntraPolicy& p) {
  switch (p.kind) {
    case IntraPolicy::Kind::row_major: return "row_major";
    case IntraPolicy::Kind::col_major: return "col_major";
    case IntraPolicy::Kind::grouped:
      return "grouped(" + std::to_string(p.group) + ")";
  }
  return "?";
}

namespace {

std::tuple<int64_t, int64_t, int64_t, int64_t> intra_key(
    const TileProgram& p, const IntraPolicy& policy, int64_t tile) {
  const auto c = p.coords(tile);
  const int64_t m = c.empty() ? 0 : c[0];
  const int64_t n = c.size() > 1 ? c[1] : 0;
  switch (policy.kind) {
    case IntraPolicy::Kind::row_major: return {m, n, 0, 0};
    case IntraPolicy::Kind::col_major: return {n, m, 0, 0};
    case IntraPolicy::Kind::grouped: {
      const int64_t g = policy.group;
      const int64_t tiles_m = p.axis(p.spatial[0]).tiles();
      const int64_t blocks = (tiles_m + g - 1) / g;
      const int64_t panel = n / g;
      int64_t block = m / g;
      if (panel % 2 == 1) block = blocks - 1 - block;
      return {panel, block, n, m};
    }
  }
  return {m, n, 0, 0};
}

void check_coverage(const Workload& w, int rank, const DepGraph& g) {
  const TileProgram& p = *w.program;
  const InitialState st = initial_state(w, rank);
  std::vector<Region> cover = st.valid;
  cover.insert(cover.end(), st.produced.begin(), st.produced.end());
  const auto acc = op_accesses(w.schedule);
  for (const OpRef& o : g.incoming) {
    for (const Access& a : acc[o.rank][o.index]) {
      if (a.rank == rank && a.kind != AccessKind::read) cover.push_back(a.region);
    }
  }
  for (const TileAccess& ta : p.accesses) {
    if (ta.write) continue;
    Region whole{ta.tensor_id, {}, {}};
    const Region first = p.region(ta, 0);
    for (size_t d = 0; d < ta.dims.size(); ++d) {
      const bool spatial = std::find(p.spatial.begin(), p.spatial.end(),
                                     ta.dims[d]) != p.spatial.end();
      whole.offsets.push_back(0);
      whole.sizes.push_back(spatial ? p.axis(ta.dims[d]).extent
                                    : first.sizes[d]);
    }
    if (covered_by(whole, cover)) continue;
    for (int64_t t = 0; t < p.tile_count(); ++t) {
      const Region r = p.region(ta, t);
      if (!covered_by(r, cover)) {
        throw Error("uncovered remote read: tile " + std::to_string(t) +
                    " on rank " + std::to_string(rank) + " reads " +
                    to_string(r));
      }
    }
  }
}

}  // namespace

SwizzledSchedule swizzle_to_chunk_order(const Workload& w, int rank,
                                        const IntraPolicy& intra) {
  SwizzledSchedule out;
  out.intra = intra;
  if (!w.program) return out;
  const TileProgram& p = *w.program;
  const DepGraph g = build_depgraph(w, rank);
  check_coverage(w, rank, g);

  std::map<OpRef, int64_t> gpos;
  {
    const auto order = global_order(w.schedule);
    for (size_t k = 0; k < order.size(); ++k) gpos[order[k]] = k;
  }
  const int64_t n = p.tile_count();
  std::vector<int64_t> group(n, -1);     // global position of latest input
  std::vector<int64_t> sub(n, LLONG_MAX);  // first op consuming the output
  for (const auto& [op, tiles] : g.consumers) {
    for (int64_t t : tiles) group[t] = std::max(group[t], gpos[op]);
  }
  for (const auto& [op, tiles] : g.producers) {
    for (int64_t t : tiles) sub[t] = std::min(sub[t], gpos[op]);
  }
  std::vector<std::tuple<int64_t, int64_t, std::tuple<int64_t, int64_t, int64_t, int64_t>, int64_t>>
      keys;
  keys.reserve(n);
  for (int64_t t = 0; t < n; ++t) {
    keys.emplace_back(group[t], sub[t], intra_key(p, intra, t), t);
  }
  std::sort(keys.begin(), keys.end());

  std::map<int64_t, OpRef> op_at;
  for (const auto& [op, pos] : gpos) op_at[pos] = op;
  out.group_of_tile.assign(n, 0);
  // Group 0 (possibly empty) holds tiles without remote reads.
  out.group_start.push_back(0);
  int64_t current = -1;
  for (size_t k = 0; k < keys.size(); ++k) {
    const int64_t gkey = std::get<0>(keys[k]);
    const int64_t t = std::get<3>(keys[k]);
    if (gkey != current) {
      out.group_start.push_back(static_cast<int64_t>(k));
      out.chunk_order.push_back(op_at[gkey]);
      current = gkey;
    }
    out.group_of_tile[t] = static_cast<int>(out.chunk_order.size());
    out.order.push_back(t);
  }
  return out;
}

Json swizzle_to_json(const SwizzledSchedule& s) {
  Json chunks = Json::array();
  for (const OpRef& o : s.chunk_order) chunks.push_back(o);
  return Json{{"order", s.order},
              {"group_start", s.group_start},
              {"chunk_order", chunks},
              {"intra", to_string(s.intra)}};
}

std::string op_signal(const OpRef& op) {
  return "op:" + std::to_string(op.rank) + ":" + std::to_string(op.index);
}

std::string tile_counter_signal(int tile_rank, const OpRef& op) {
  return "tiles:" + std::to_string(tile_rank) + ":" + std::to_string(op.rank) +
         ":" + std::to_string(op.index);
}

namespace {

// ancestors[flat(o)] = ops `o` transitively depends on via explicit deps.
struct DepClosure {
  std::map<OpRef, int> flat;
  std::vector<std::vector<bool>> ancestors;

  explicit DepClosure(const CommSchedule& s) {
    const auto refs = s.all_ops();
    for (size_t k = 0; k < refs.size(); ++k) flat[refs[k]] = k;
    ancestors.assign(refs.size(), std::vector<bool>(refs.size(), false));
    for (const OpRef& o : global_order(s)) {
      auto& mine = ancestors[flat[o]];
      for (const Dependency& d : s.op(o).deps) {
        const int k = flat[d];
        mine[k] = true;
        const auto& theirs = ancestors[k];
        for (size_t x = 0; x < theirs.size(); ++x) {
          if (theirs[x]) mine[x] = true;
        }
      }
    }
  }

  bool before(const OpRef& a, const OpRef& b) const {
    return ancestors[flat.at(b)][flat.at(a)];
  }
};

}  // namespace

SyncPlan insert_min_syncs(const DepGraph& g, const CommSchedule& s,
                          const std::vector<int64_t>& order) {
  SyncPlan plan;
  const DepClosure hb(s);
  std::vector<int64_t> pos(g.tile_count, -1);
  for (size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;

  struct Candidate {
    OpRef op;
    int64_t position;
  };
  std::vector<Candidate> incoming;
  for (const auto& [op, tiles] : g.consumers) {
    int64_t first = LLONG_MAX;
    for (int64_t t : tiles) first = std::min(first, pos[t]);
    incoming.push_back({op, first});
  }
  std::set<OpRef> signalled;
  auto signal_op = [&](const OpRef& op) {
    if (!signalled.insert(op).second) return;
    plan.points.push_back({SyncPoint::Kind::signal, SyncPoint::Stream::ops,
                           op.rank, op.index, op_signal(op), op, {}});
  };
  for (const Candidate& c : incoming) {
    // A wait is implied when a later-completing op is already waited for
    // no later in the tile order.
    const bool implied = std::any_of(
        incoming.begin(), incoming.end(), [&](const Candidate& o) {
          return !(o.op == c.op) && o.position <= c.position &&
                 hb.before(c.op, o.op);
        });
    if (implied) continue;
    signal_op(c.op);
    plan.points.push_back({SyncPoint::Kind::wait, SyncPoint::Stream::tiles,
                           g.rank, c.position, op_signal(c.op), c.op,
                           g.consumers.at(c.op)});
  }
  for (const OpRef& op : g.incoming) {
    if (g.consumers.count(op)) continue;
    signal_op(op);
    plan.diagnostics.push_back("dead chunk " + to_string(op) + " on rank " +
                               std::to_string(g.rank));
  }

  for (const auto& [op, tiles] : g.producers) {
    const bool implied = std::any_of(
        g.producers.begin(), g.producers.end(), [&](const auto& other) {
          if (other.first == op || !hb.before(other.first, op)) return false;
          return std::includes(other.second.begin(), other.second.end(),
                               tiles.begin(), tiles.end());
        });
    if (implied) continue;
    int64_t last = -1;
    for (int64_t t : tiles) last = std::max(last, pos[t]);
    const std::string sig = tile_counter_signal(g.rank, op);
    plan.points.push_back({SyncPoint::Kind::signal, SyncPoint::Stream::tiles,
                           g.rank, last, sig, op, tiles});
    plan.points.push_back({SyncPoint::Kind::wait, SyncPoint::Stream::ops,
                           op.rank, op.index, sig, op, tiles});
  }
  std::stable_sort(plan.points.begin(), plan.points.end(),
                   [](const SyncPoint& a, const SyncPoint& b) {
                     return std::tie(a.stream, a.rank, a.position) <
                            std::tie(b.stream, b.rank, b.position);
                   });
  return plan;
}

}  // namespace chunksched
