// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <climits>
#include <queue>
#include <tuple>

#include "chunksched/error.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {

namespace {

struct ElemState {
  std::vector<char> valid;
  std::vector<int> pending;
  std::vector<int> expected;
  std::vector<int> received;
};

struct Footprint {
  int rank;
  Region region;
  bool write;
};

class Reference {
 public:
  Reference(const Workload& w, const Buffers& inputs)
      : w_(w),
        s_(w.schedule),
        tensors_(workload_tensors(w)),
        store_(inputs),
        state_(s_.world_size) {
    for (int r = 0; r < s_.world_size; ++r) {
      for (const auto& [id, t] : tensors_) {
        ElemState& e = state_[r][id];
        const size_t n = t.elements();
        e.valid.assign(n, 0);
        e.pending.assign(n, 0);
        e.expected.assign(n, 0);
        e.received.assign(n, 0);
      }
      const InitialState init = initial_state(w, r);
      for (const Region& x : init.valid) set(r, x, [](ElemState& e, int64_t i) { e.valid[i] = 1; });
      for (const Region& x : init.produced) set(r, x, [](ElemState& e, int64_t i) { e.valid[i] = 0; });
      if (w.program) {
        for (int64_t t = 0; t < w.program->tile_count(); ++t) {
          for (const Region& x : w.program->writes(t)) {
            set(r, x, [](ElemState& e, int64_t i) { ++e.pending[i]; });
          }
        }
      }
    }
    for (const OpRef& o : s_.all_ops()) {
      const CommOp& op = s_.op(o);
      if (op.is_p2p() && op.p2p().accumulate) {
        const P2P& p = op.p2p();
        const int dst = p.direction == Direction::push ? p.peer : o.rank;
        set(dst, p.dst_chunk.region,
            [](ElemState& e, int64_t i) { ++e.expected[i]; });
      }
    }
  }

  ReferenceResult run() {
    struct Node {
      std::vector<OpRef> ops;  // one P2P op or a collective group
      int rank = -1;           // tile nodes
      int64_t tile = -1;
      std::vector<Footprint> foot;
    };
    std::vector<Node> nodes;
    std::map<OpRef, size_t> node_of;
    for (const auto& group : collective_groups(s_)) {
      for (const OpRef& o : group) node_of[o] = nodes.size();
      Node n;
      n.ops = group;
      nodes.push_back(std::move(n));
    }
    for (const OpRef& o : s_.all_ops()) {
      if (node_of.count(o)) continue;
      node_of[o] = nodes.size();
      Node n;
      n.ops = {o};
      nodes.push_back(std::move(n));
    }
    for (Node& n : nodes) {
      for (const OpRef& o : n.ops) {
        const CommOp& op = s_.op(o);
        if (op.is_p2p()) {
          const P2P& p = op.p2p();
          const bool push = p.direction == Direction::push;
          n.foot.push_back({push ? o.rank : p.peer, p.src_chunk.region, false});
          n.foot.push_back({push ? p.peer : o.rank, p.dst_chunk.region, true});
        } else {
          n.foot.push_back({o.rank, op.collective().src_chunk.region, false});
          n.foot.push_back({o.rank, op.collective().dst_chunk.region, true});
        }
      }
    }
    const size_t op_nodes = nodes.size();
    const int64_t tiles = w_.program ? w_.program->tile_count() : 0;
    for (int r = 0; r < s_.world_size; ++r) {
      for (int64_t t = 0; t < tiles; ++t) {
        Node n;
        n.rank = r;
        n.tile = t;
        for (const Region& x : w_.program->reads(t)) n.foot.push_back({r, x, false});
        for (const Region& x : w_.program->writes(t)) n.foot.push_back({r, x, true});
        nodes.push_back(std::move(n));
      }
    }

    std::vector<std::vector<size_t>> succ(nodes.size());
    std::vector<int> indeg(nodes.size(), 0);
    auto edge = [&](size_t a, size_t b) {
      if (a == b) return;
      succ[a].push_back(b);
      ++indeg[b];
    };
    for (const OpRef& o : s_.all_ops()) {
      for (const Dependency& d : s_.op(o).deps) edge(node_of.at(d), node_of.at(o));
    }
    for (size_t a = 0; a < op_nodes; ++a) {
      for (size_t b = op_nodes; b < nodes.size(); ++b) {
        bool op_first = false, tile_first = false;
        for (const Footprint& fo : nodes[a].foot) {
          for (const Footprint& ft : nodes[b].foot) {
            if (fo.rank != ft.rank || !overlaps(fo.region, ft.region)) continue;
            if (fo.write && !ft.write) op_first = true;
            if (ft.write) tile_first = true;
          }
        }
        if (tile_first) {
          edge(b, a);
        } else if (op_first) {
          edge(a, b);
        }
      }
    }

    std::map<OpRef, int64_t> gpos;
    {
      const auto order = global_order(s_);
      for (size_t k = 0; k < order.size(); ++k) gpos[order[k]] = k;
    }
    using Key = std::tuple<int, int64_t, int64_t, size_t>;
    std::priority_queue<Key, std::vector<Key>, std::greater<Key>> ready;
    auto push = [&](size_t k) {
      const Node& n = nodes[k];
      if (k < op_nodes) {
        int64_t p = LLONG_MAX;
        for (const OpRef& o : n.ops) p = std::min(p, gpos.at(o));
        ready.push({0, p, 0, k});
      } else {
        ready.push({1, n.rank, n.tile, k});
      }
    };
    for (size_t k = 0; k < nodes.size(); ++k) {
      if (indeg[k] == 0) push(k);
    }
    size_t done = 0;
    while (!ready.empty()) {
      const size_t k = std::get<3>(ready.top());
      ready.pop();
      ++done;
      if (k < op_nodes) {
        exec_ops(nodes[k].ops);
      } else {
        exec_tile(nodes[k].rank, nodes[k].tile);
      }
      for (size_t x : succ[k]) {
        if (--indeg[x] == 0) push(x);
      }
    }
    if (done != nodes.size()) {
      throw Error("reference execution found cyclic dependences");
    }
    return {store_.materialize(), std::move(violations_)};
  }

 private:
  template <typename F>
  void set(int rank, const Region& r, F&& f) {
    ElemState& e = state_[rank].at(r.tensor_id);
    for (int64_t i : index_of(r)) f(e, i);
  }

  std::vector<int64_t> index_of(const Region& r) const {
    return flat_indices(r, Layout::row_major, tensors_.at(r.tensor_id).shape);
  }

  void check_read(int rank, const Region& r, const std::string& who) {
    const ElemState& e = state_[rank].at(r.tensor_id);
    for (int64_t i : index_of(r)) {
      if (!e.valid[i] || e.pending[i] > 0 || e.received[i] < e.expected[i]) {
        violations_.push_back({"invalid_read", who + " read " + to_string(r) +
                                                   " on rank " +
                                                   std::to_string(rank) +
                                                   " before it was valid"});
        return;
      }
    }
  }

  void land(int rank, const Region& r, bool accumulate, int source,
            const std::vector<double>& values, const std::string& who) {
    ElemState& e = state_[rank].at(r.tensor_id);
    const auto idx = index_of(r);
    bool race = false, invalid = false;
    for (int64_t i : idx) {
      race = race || e.pending[i] > 0;
      if (accumulate) {
        invalid = invalid || !e.valid[i];
        ++e.received[i];
      } else {
        e.valid[i] = 1;
      }
    }
    if (race) {
      violations_.push_back({"write_race", who + " wrote " + to_string(r) +
                                               " before its producers ran"});
    } else if (invalid) {
      violations_.push_back({"invalid_accumulate",
                             who + " accumulated into invalid " + to_string(r)});
    }
    if (accumulate) {
      store_.accumulate(rank, r.tensor_id, source, idx, values);
    } else {
      store_.overwrite(rank, r.tensor_id, idx, values);
    }
  }

  void exec_ops(const std::vector<OpRef>& ops) {
    const std::string who = "op " + to_string(ops[0]);
    const CommOp& first = s_.op(ops[0]);
    if (first.is_p2p()) {
      const P2P& p = first.p2p();
      const bool push = p.direction == Direction::push;
      const int src = push ? ops[0].rank : p.peer;
      const int dst = push ? p.peer : ops[0].rank;
      check_read(src, p.src_chunk.region, who);
      const auto v = store_.read(src, p.src_chunk.region.tensor_id,
                                 index_of(p.src_chunk.region));
      land(dst, p.dst_chunk.region, p.accumulate, src, v, who);
      return;
    }
    struct Out {
      int rank;
      Region region;
      int source;
      std::vector<double> values;
    };
    std::vector<Out> outs;
    const CollectiveType type = first.collective().collective_type;
    for (const OpRef& q : ops) {
      check_read(q.rank, s_.op(q).collective().src_chunk.region, who);
    }
    for (const OpRef& p : ops) {
      const Region& dst = s_.op(p).collective().dst_chunk.region;
      if (type == CollectiveType::allgather ||
          type == CollectiveType::all_to_all) {
        for (const OpRef& q : ops) {
          auto cut = intersect(s_.op(q).collective().src_chunk.region, dst);
          if (!cut) continue;
          outs.push_back({p.rank, *cut, q.rank,
                          store_.read(q.rank, cut->tensor_id, index_of(*cut))});
        }
        continue;
      }
      std::vector<double> sum(dst.elements(), 0.0);
      for (const OpRef& q : ops) {
        const auto v = store_.read(q.rank, dst.tensor_id, index_of(dst));
        for (size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
      }
      outs.push_back({p.rank, dst, p.rank, std::move(sum)});
    }
    for (const Out& o : outs) land(o.rank, o.region, false, o.source, o.values, who);
  }

  void exec_tile(int rank, int64_t tile) {
    const TileProgram& p = *w_.program;
    const std::string who = "tile " + std::to_string(tile);
    std::vector<std::vector<double>> reads;
    for (const TileAccess& a : p.accesses) {
      if (a.write) continue;
      const Region r = p.region(a, tile);
      check_read(rank, r, who);
      reads.push_back(store_.read(rank, r.tensor_id, index_of(r)));
    }
    const auto out = tile_body(p, tile, tensors_, reads);
    size_t k = 0;
    for (const TileAccess& a : p.accesses) {
      if (!a.write) continue;
      const Region r = p.region(a, tile);
      ElemState& e = state_[rank].at(r.tensor_id);
      const auto idx = index_of(r);
      for (int64_t i : idx) {
        --e.pending[i];
        e.valid[i] = 1;
      }
      store_.overwrite(rank, r.tensor_id, idx, out[k++]);
    }
  }

  const Workload& w_;
  const CommSchedule& s_;
  std::map<std::string, TensorSpec> tensors_;
  ValueStore store_;
  std::vector<std::map<std::string, ElemState>> state_;
  std::vector<Violation> violations_;
};

}  // namespace

ReferenceResult reference_execute(const Workload& w, const Buffers& inputs) {
  return Reference(w, inputs).run();
}

}  // namespace chunksched
