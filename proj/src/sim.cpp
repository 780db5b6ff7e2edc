// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "chunksched/error.hpp"

namespace chunksched {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cell {
  bool valid = false;
  int pending = 0;   // tile writes still to come
  int expected = 0;  // accumulations the cell will receive
  int received = 0;
};

// Validity of one tensor on one rank, kept per cell of the grid formed by
// every region boundary any participant uses.
class CellGrid {
 public:
  explicit CellGrid(std::vector<std::vector<int64_t>> cuts)
      : cuts_(std::move(cuts)) {
    size_t n = 1;
    for (const auto& c : cuts_) n *= c.size() - 1;
    cells_.resize(n);
  }

  template <typename F>
  void for_each(const Region& r, F&& f) {
    const int d = static_cast<int>(cuts_.size());
    std::vector<size_t> lo(d), hi(d);
    for (int k = 0; k < d; ++k) {
      const auto& c = cuts_[k];
      lo[k] = std::lower_bound(c.begin(), c.end(), r.offsets[k]) - c.begin();
      hi[k] = std::lower_bound(c.begin(), c.end(), r.offsets[k] + r.sizes[k]) -
              c.begin();
      if (lo[k] >= hi[k]) return;
    }
    std::vector<size_t> at = lo;
    for (;;) {
      size_t flat = 0;
      for (int k = 0; k < d; ++k) flat = flat * (cuts_[k].size() - 1) + at[k];
      f(cells_[flat]);
      int k = d - 1;
      for (; k >= 0; --k) {
        if (++at[k] < hi[k]) break;
        at[k] = lo[k];
      }
      if (k < 0) break;
    }
  }

 private:
  std::vector<std::vector<int64_t>> cuts_;
  std::vector<Cell> cells_;
};

struct PendingWrite {
  int rank = 0;
  Region region;
  bool accumulate = false;
  int source = 0;
  std::vector<double> values;  // empty without payload
};

struct Timer {
  double time;
  uint64_t seq;
  int kind;
  int a;
  int64_t b;

  bool operator>(const Timer& o) const {
    return std::tie(time, seq) > std::tie(o.time, o.seq);
  }
};

enum TimerKind { kTileDone, kPhaseDone, kLatencyDone, kSignal };

struct Member {
  OpRef op;
  int stream = -1;        // -1: compute stream (colocated)
  std::vector<int> sms;   // SMs held by a colocated transfer
  double dispatched = 0;
  std::vector<std::string> waited;
};

struct Xfer {
  std::vector<Member> members;
  std::vector<PendingWrite> writes;
  int flows_left = 0;
};

struct Flow {
  int xfer = 0;
  int member = 0;  // driving member
  int src = 0;
  int dst = 0;
  double remaining = 0;
  double rate = 0;
  bool done = false;
};

struct RunningTile {
  int rank = 0;
  int64_t tile = 0;
  int sm = 0;
  double start = 0;
  std::vector<std::string> waited;
  std::vector<std::vector<double>> out;
};

struct ComputeState {
  size_t head = 0;
  bool phase_busy = false;
  double phase_start = 0;
  std::set<int> free_sms;
  int running_tiles = 0;
  int running_xfers = 0;
  std::vector<std::string> waited;
};

struct CommState {
  size_t head = 0;
  bool busy = false;
  std::vector<std::string> waited;
};

class Engine {
 public:
  Engine(const DeviceProgram& prog, const SimConfig& cfg,
         const Buffers* inputs)
      : prog_(prog),
        cfg_(cfg),
        s_(prog.workload.schedule),
        tensors_(workload_tensors(prog.workload)),
        rng_(cfg.jitter.seed) {
    const int world = s_.world_size;
    if (inputs) store_.emplace(*inputs);
    build_grids();
    for (const auto& group : collective_groups(s_)) {
      for (const OpRef& o : group) group_of_[o] = groups_.size();
      groups_.push_back(group);
    }
    arrivals_.resize(groups_.size());
    compute_.resize(world);
    comm_.resize(world);
    for (int r = 0; r < world; ++r) {
      for (int i = 0; i < prog_.ranks[r].compute_sms; ++i) {
        compute_[r].free_sms.insert(i);
      }
      comm_[r].resize(prog_.ranks[r].comm.size());
    }
    for (size_t c = 0; c < prog_.counters.size(); ++c) {
      const CounterSignal& cs = prog_.counters[c];
      counter_left_.push_back(static_cast<int>(cs.tiles.size()));
      for (int64_t t : cs.tiles) counters_of_[{cs.rank, t}].push_back(c);
      if (cs.tiles.empty()) fire_later(cs.name, 0);
    }
  }

  SimResult run() {
    for (;;) {
      pump();
      if (rates_dirty_) recompute_rates();
      const double t_timer = timers_.empty() ? kInf : timers_.top().time;
      double t_flow = kInf;
      for (const Flow& f : flows_) {
        if (!f.done && f.rate > 0) {
          t_flow = std::min(t_flow, now_ + f.remaining / f.rate);
        }
      }
      if (t_timer == kInf && t_flow == kInf) break;
      if (t_flow <= t_timer) {
        std::vector<int> finished;
        for (size_t k = 0; k < flows_.size(); ++k) {
          Flow& f = flows_[k];
          if (f.done || f.rate <= 0) continue;
          if (now_ + f.remaining / f.rate <= t_flow) finished.push_back(k);
        }
        advance(t_flow);
        for (int k : finished) {
          flows_[k].remaining = 0;
          flows_[k].done = true;
          rates_dirty_ = true;
          if (--xfers_[flows_[k].xfer].flows_left == 0) {
            complete_xfer(flows_[k].xfer);
          }
        }
      } else {
        const Timer t = timers_.top();
        timers_.pop();
        advance(t.time);
        handle(t);
      }
    }
    check_finished();

    SimResult out;
    out.violations = std::move(violations_);
    out.timeline = build_timeline();
    if (store_) out.buffers = store_->materialize();
    return out;
  }

 private:
  // ---- setup -------------------------------------------------------------

  void build_grids() {
    const int world = s_.world_size;
    std::map<std::string, std::vector<std::set<int64_t>>> cuts;
    for (const auto& [id, t] : tensors_) {
      auto& c = cuts[id];
      c.resize(t.shape.size());
      for (size_t d = 0; d < t.shape.size(); ++d) c[d] = {0, t.shape[d]};
    }
    auto add = [&](const Region& r) {
      auto& c = cuts.at(r.tensor_id);
      for (int d = 0; d < r.dims(); ++d) {
        c[d].insert(r.offsets[d]);
        c[d].insert(r.offsets[d] + r.sizes[d]);
      }
    };
    accesses_ = op_accesses(s_);
    for (const auto& rank : accesses_) {
      for (const auto& op : rank) {
        for (const Access& a : op) add(a.region);
      }
    }
    std::vector<InitialState> init;
    for (int r = 0; r < world; ++r) {
      init.push_back(initial_state(prog_.workload, r));
      for (const Region& x : init.back().valid) add(x);
      for (const Region& x : init.back().produced) add(x);
    }
    const auto& prog = prog_.workload.program;
    if (prog) {
      for (const TileAccess& a : prog->accesses) {
        const Region first = prog->region(a, 0);
        for (size_t d = 0; d < a.dims.size(); ++d) {
          auto& c = cuts.at(a.tensor_id)[d];
          if (std::find(prog->spatial.begin(), prog->spatial.end(),
                        a.dims[d]) == prog->spatial.end()) {
            c.insert(first.offsets[d]);
            c.insert(first.offsets[d] + first.sizes[d]);
            continue;
          }
          const Axis& ax = prog->axis(a.dims[d]);
          for (int64_t x = 0; x < ax.extent; x += ax.block) c.insert(x);
          c.insert(ax.extent);
        }
      }
    }
    grids_.resize(world);
    for (int r = 0; r < world; ++r) {
      for (const auto& [id, c] : cuts) {
        std::vector<std::vector<int64_t>> v;
        for (const auto& axis : c) v.emplace_back(axis.begin(), axis.end());
        grids_[r].emplace(id, CellGrid(std::move(v)));
      }
      for (const Region& x : init[r].valid) {
        grid(r, x).for_each(x, [](Cell& c) { c.valid = true; });
      }
      for (const Region& x : init[r].produced) {
        grid(r, x).for_each(x, [](Cell& c) { c.valid = false; });
      }
      if (prog) {
        for (int64_t t = 0; t < prog->tile_count(); ++t) {
          for (const Region& x : prog->writes(t)) {
            grid(r, x).for_each(x, [](Cell& c) { ++c.pending; });
          }
        }
      }
    }
    for (const auto& rank : accesses_) {
      for (const auto& op : rank) {
        for (const Access& a : op) {
          if (a.kind == AccessKind::accumulate) {
            grid(a.rank, a.region).for_each(a.region,
                                            [](Cell& c) { ++c.expected; });
          }
        }
      }
    }
  }

  CellGrid& grid(int rank, const Region& r) {
    return grids_[rank].at(r.tensor_id);
  }

  bool readable(int rank, const Region& r) {
    bool ok = true;
    grid(rank, r).for_each(r, [&](Cell& c) {
      ok = ok && c.valid && c.pending == 0 && c.received >= c.expected;
    });
    return ok;
  }

  std::vector<int64_t> index_of(const Region& r) const {
    return flat_indices(r, Layout::row_major, tensors_.at(r.tensor_id).shape);
  }

  std::vector<double> read_values(int rank, const Region& r) const {
    if (!store_) return {};
    return store_->read(rank, r.tensor_id, index_of(r));
  }

  // ---- helpers -----------------------------------------------------------

  double jitter_time(double base, int rank) {
    if (!cfg_.jitter.enabled) return base;
    if (straggler_ < 0) {
      std::uniform_int_distribution<int> pick(0, s_.world_size - 1);
      straggler_ = cfg_.jitter.straggler > 1.0 ? pick(rng_) : s_.world_size;
    }
    if (rank == straggler_) base *= cfg_.jitter.straggler;
    std::uniform_real_distribution<double> scale(cfg_.jitter.scale_lo,
                                                 cfg_.jitter.scale_hi);
    std::uniform_real_distribution<double> add(0.0, cfg_.jitter.max_delay);
    const double a = scale(rng_);
    const double b = add(rng_);
    return base * a + b;
  }

  void schedule(double time, int kind, int a, int64_t b) {
    timers_.push({time, seq_++, kind, a, b});
  }

  int signal_id(const std::string& name) {
    auto [it, inserted] = signal_ids_.emplace(name, signal_names_.size());
    if (inserted) {
      signal_names_.push_back(name);
      signal_time_.push_back(-1);
    }
    return it->second;
  }

  bool fired(const std::string& name) {
    auto it = signal_ids_.find(name);
    return it != signal_ids_.end() && signal_time_[it->second] >= 0;
  }

  void fire_later(const std::string& name, double delay) {
    schedule(now_ + delay, kSignal, signal_id(name), 0);
  }

  void violation(const std::string& code, const std::string& msg) {
    std::ostringstream os;
    os << "t=" << now_ * 1e6 << "us: " << msg;
    violations_.push_back({code, os.str()});
  }

  void advance(double t) {
    const double dt = t - now_;
    if (dt > 0) {
      for (Flow& f : flows_) {
        if (!f.done) f.remaining = std::max(0.0, f.remaining - f.rate * dt);
      }
    }
    now_ = std::max(now_, t);
  }

  int driver_sms(const Member& m) const {
    if (m.stream < 0) return static_cast<int>(m.sms.size());
    return prog_.ranks[m.op.rank].comm[m.stream].sms;
  }

  // ---- stream progress ---------------------------------------------------

  void pump() {
    bool progress = true;
    while (progress) {
      progress = false;
      for (int r = 0; r < s_.world_size; ++r) {
        progress |= pump_compute(r);
        for (size_t k = 0; k < comm_[r].size(); ++k) {
          progress |= pump_comm(r, static_cast<int>(k));
        }
      }
    }
  }

  bool pump_compute(int r) {
    ComputeState& st = compute_[r];
    const auto& items = prog_.ranks[r].compute.items;
    bool progress = false;
    while (st.head < items.size() && !st.phase_busy) {
      const StreamItem& it = items[st.head];
      switch (it.kind) {
        case ItemKind::wait:
          if (!fired(it.signal)) return progress;
          st.waited.push_back(it.signal);
          ++st.head;
          break;
        case ItemKind::launch:
        case ItemKind::barrier:
          if (it.kind == ItemKind::barrier &&
              (st.running_tiles > 0 || st.running_xfers > 0)) {
            return progress;
          }
          st.phase_busy = true;
          st.phase_start = now_;
          schedule(now_ + it.duration, kPhaseDone, r, 0);
          return true;
        case ItemKind::tile:
          if (st.free_sms.empty()) return progress;
          start_tile(r, it.tile);
          ++st.head;
          break;
        case ItemKind::transfer: {
          const BackendKind kind = prog_.assignment.at(it.op);
          const int need = std::min(prog_.profile.at(kind).max_useful_sms,
                                    prog_.ranks[r].compute_sms);
          if (static_cast<int>(st.free_sms.size()) < std::max(need, 1)) {
            return progress;
          }
          Member m;
          m.op = it.op;
          m.stream = -1;
          for (int k = 0; k < std::max(need, 1); ++k) {
            m.sms.push_back(*st.free_sms.begin());
            st.free_sms.erase(st.free_sms.begin());
          }
          m.dispatched = now_;
          m.waited = std::move(st.waited);
          st.waited.clear();
          ++st.running_xfers;
          ++st.head;
          start_member(std::move(m));
          break;
        }
      }
      progress = true;
    }
    return progress;
  }

  bool pump_comm(int r, int k) {
    CommState& st = comm_[r][k];
    const auto& items = prog_.ranks[r].comm[k].items;
    bool progress = false;
    while (!st.busy && st.head < items.size()) {
      const StreamItem& it = items[st.head];
      if (it.kind == ItemKind::wait) {
        if (!fired(it.signal)) return progress;
        st.waited.push_back(it.signal);
        ++st.head;
        progress = true;
        continue;
      }
      if (it.kind != ItemKind::transfer) {
        throw Error("communication stream holds a " +
                    std::string(to_string(it.kind)) + " item");
      }
      Member m;
      m.op = it.op;
      m.stream = k;
      m.dispatched = now_;
      m.waited = std::move(st.waited);
      st.waited.clear();
      st.busy = true;
      ++st.head;
      start_member(std::move(m));
      return true;
    }
    return progress;
  }

  void start_tile(int r, int64_t tile) {
    ComputeState& st = compute_[r];
    const TileProgram& p = *prog_.workload.program;
    RunningTile rt;
    rt.rank = r;
    rt.tile = tile;
    rt.sm = *st.free_sms.begin();
    st.free_sms.erase(st.free_sms.begin());
    rt.start = now_;
    rt.waited = std::move(st.waited);
    st.waited.clear();
    std::vector<std::vector<double>> reads;
    for (const TileAccess& a : p.accesses) {
      if (a.write) continue;
      const Region reg = p.region(a, tile);
      if (!readable(r, reg)) {
        violation("invalid_read", "tile " + std::to_string(tile) +
                                      " on rank " + std::to_string(r) +
                                      " read " + to_string(reg) +
                                      " before it was valid");
      }
      if (store_) reads.push_back(read_values(r, reg));
    }
    if (store_) rt.out = tile_body(p, tile, tensors_, reads);
    ++st.running_tiles;
    const double dur = jitter_time(p.flops_per_tile() / cfg_.flops_per_sm, r);
    tiles_.push_back(std::move(rt));
    schedule(now_ + dur, kTileDone, r, tiles_.size() - 1);
  }

  void start_member(Member m) {
    auto g = group_of_.find(m.op);
    if (g == group_of_.end()) {
      begin_xfer({std::move(m)});
      return;
    }
    auto& arrived = arrivals_[g->second];
    arrived.push_back(std::move(m));
    if (arrived.size() < groups_[g->second].size()) return;
    std::sort(arrived.begin(), arrived.end(),
              [](const Member& a, const Member& b) { return a.op < b.op; });
    begin_xfer(std::move(arrived));
    arrived.clear();
  }

  void check_read(int rank, const Region& r, const OpRef& op) {
    if (!readable(rank, r)) {
      violation("invalid_read", "op " + to_string(op) + " read " +
                                    to_string(r) + " on rank " +
                                    std::to_string(rank) +
                                    " before it was valid");
    }
  }

  void begin_xfer(std::vector<Member> members) {
    Xfer x;
    x.members = std::move(members);
    double latency = 0;
    for (const Member& m : x.members) {
      latency = std::max(latency, prog_.profile
                                      .at(prog_.assignment.at(m.op))
                                      .launch_latency);
    }
    const CommOp& first = s_.op(x.members[0].op);
    if (first.is_p2p()) {
      const OpRef o = x.members[0].op;
      const P2P& p = first.p2p();
      const int src = p.direction == Direction::push ? o.rank : p.peer;
      const int dst = p.direction == Direction::push ? p.peer : o.rank;
      check_read(src, p.src_chunk.region, o);
      PendingWrite w;
      w.rank = dst;
      w.region = p.dst_chunk.region;
      w.accumulate = p.accumulate;
      w.source = src;
      w.values = read_values(src, p.src_chunk.region);
      x.writes.push_back(std::move(w));
    } else {
      const CollectiveType type = first.collective().collective_type;
      for (const Member& m : x.members) {
        check_read(m.op.rank, s_.op(m.op).collective().src_chunk.region, m.op);
      }
      for (const Member& mp : x.members) {
        const Collective& cp = s_.op(mp.op).collective();
        const Region& dst = cp.dst_chunk.region;
        if (type == CollectiveType::allgather ||
            type == CollectiveType::all_to_all) {
          for (const Member& mq : x.members) {
            const Region& src = s_.op(mq.op).collective().src_chunk.region;
            auto cut = intersect(src, dst);
            if (!cut) continue;
            x.writes.push_back(
                {mp.op.rank, *cut, false, mq.op.rank,
                 read_values(mq.op.rank, *cut)});
          }
          continue;
        }
        PendingWrite w{mp.op.rank, dst, false, mp.op.rank, {}};
        if (store_) {
          w.values.assign(dst.elements(), 0.0);
          for (const Member& mq : x.members) {
            const auto v = read_values(mq.op.rank, dst);
            for (size_t i = 0; i < v.size(); ++i) w.values[i] += v[i];
          }
        }
        x.writes.push_back(std::move(w));
      }
    }
    // Data streams in for the whole transfer, so the destination must
    // already be free of outstanding tile stores when it starts.
    for (const PendingWrite& w : x.writes) {
      bool race = false;
      grid(w.rank, w.region).for_each(w.region, [&](Cell& c) {
        race = race || c.pending > 0;
      });
      if (race) {
        violation("write_race", "op " + to_string(x.members[0].op) +
                                    " wrote " + to_string(w.region) +
                                    " on rank " + std::to_string(w.rank) +
                                    " before the tiles producing it ran");
      }
    }
    xfers_.push_back(std::move(x));
    schedule(now_ + jitter_time(latency, xfers_.back().members[0].op.rank),
             kLatencyDone, xfers_.size() - 1, 0);
  }

  void start_flows(int id) {
    Xfer& x = xfers_[id];
    const CommOp& first = s_.op(x.members[0].op);
    auto add_flow = [&](int member, int src, int dst, double bytes) {
      if (bytes <= 0) return;
      flows_.push_back({id, member, src, dst, bytes, 0, false});
      ++x.flows_left;
    };
    if (first.is_p2p()) {
      const OpRef o = x.members[0].op;
      const P2P& p = first.p2p();
      const int src = p.direction == Direction::push ? o.rank : p.peer;
      const int dst = p.direction == Direction::push ? p.peer : o.rank;
      add_flow(0, src, dst,
               byte_volume(p.src_chunk.region,
                           tensors_.at(p.src_chunk.region.tensor_id)));
    } else {
      const CollectiveType type = first.collective().collective_type;
      const int n = static_cast<int>(x.members.size());
      for (int pi = 0; pi < n; ++pi) {
        const Collective& cp = s_.op(x.members[pi].op).collective();
        const TensorSpec& t = tensors_.at(cp.dst_chunk.region.tensor_id);
        for (int qi = 0; qi < n; ++qi) {
          if (qi == pi) continue;
          const Collective& cq = s_.op(x.members[qi].op).collective();
          double bytes = 0;
          switch (type) {
            case CollectiveType::allgather:
            case CollectiveType::all_to_all:
              if (auto cut = intersect(cq.src_chunk.region,
                                       cp.dst_chunk.region)) {
                bytes = byte_volume(*cut, t);
              }
              break;
            case CollectiveType::reduce_scatter:
              bytes = byte_volume(cp.dst_chunk.region, t);
              break;
            case CollectiveType::allreduce:
              // Reduce-scatter then allgather: 2/n of the buffer per pair.
              bytes = 2.0 * byte_volume(cq.src_chunk.region, t) / n;
              break;
          }
          add_flow(pi, x.members[qi].op.rank, x.members[pi].op.rank, bytes);
        }
      }
    }
    rates_dirty_ = true;
    if (x.flows_left == 0) complete_xfer(id);
  }

  void recompute_rates() {
    rates_dirty_ = false;
    std::map<std::tuple<int, int, int>, int> ids;
    std::vector<double> cap;
    std::vector<std::vector<int>> of_flow(flows_.size());
    auto constraint = [&](std::tuple<int, int, int> key, double c) {
      auto [it, inserted] = ids.emplace(key, cap.size());
      if (inserted) cap.push_back(c);
      return it->second;
    };
    std::vector<int> active;
    for (size_t k = 0; k < flows_.size(); ++k) {
      Flow& f = flows_[k];
      if (f.done) continue;
      active.push_back(k);
      const Member& m = xfers_[f.xfer].members[f.member];
      const BackendKind kind = prog_.assignment.at(m.op);
      of_flow[k].push_back(constraint(
          {0, f.xfer, f.member}, driver_cap(kind, driver_sms(m), prog_.profile)));
      if (f.src != f.dst) {
        of_flow[k].push_back(constraint({1, f.src, 0}, cfg_.egress_bw));
        of_flow[k].push_back(constraint({2, f.dst, 0}, cfg_.ingress_bw));
        of_flow[k].push_back(constraint({3, f.src, f.dst}, cfg_.pair_bw));
      }
    }
    // Max-min fair water filling.
    std::vector<int> unfixed_count(cap.size(), 0);
    for (int k : active) {
      for (int c : of_flow[k]) ++unfixed_count[c];
    }
    std::vector<bool> fixed(flows_.size(), false);
    size_t left = active.size();
    while (left > 0) {
      int best = -1;
      double share = kInf;
      for (size_t c = 0; c < cap.size(); ++c) {
        if (unfixed_count[c] == 0) continue;
        const double sh = std::max(0.0, cap[c]) / unfixed_count[c];
        if (sh < share) {
          share = sh;
          best = static_cast<int>(c);
        }
      }
      for (int k : active) {
        if (fixed[k]) continue;
        const auto& cs = of_flow[k];
        if (std::find(cs.begin(), cs.end(), best) == cs.end()) continue;
        fixed[k] = true;
        flows_[k].rate = share;
        --left;
        for (int c : cs) {
          cap[c] -= share;
          --unfixed_count[c];
        }
      }
    }
  }

  void complete_xfer(int id) {
    Xfer& x = xfers_[id];
    for (PendingWrite& w : x.writes) {
      bool invalid = false;
      grid(w.rank, w.region).for_each(w.region, [&](Cell& c) {
        if (w.accumulate) {
          invalid = invalid || !c.valid;
          ++c.received;
        } else {
          c.valid = true;
        }
      });
      if (invalid) {
        violation("invalid_accumulate",
                  "op " + to_string(x.members[0].op) +
                      " accumulated into invalid " + to_string(w.region) +
                      " on rank " + std::to_string(w.rank));
      }
      if (store_) {
        const auto idx = index_of(w.region);
        if (w.accumulate) {
          store_->accumulate(w.rank, w.region.tensor_id, w.source, idx,
                             w.values);
        } else {
          store_->overwrite(w.rank, w.region.tensor_id, idx, w.values);
        }
      }
    }
    for (Member& m : x.members) {
      const std::string label = "op " + to_string(m.op);
      const int r = m.op.rank;
      if (m.stream < 0) {
        ComputeState& st = compute_[r];
        for (int sm : m.sms) {
          events_.push_back({r, "sm" + std::to_string(sm), m.dispatched, now_,
                             label, m.waited});
          st.free_sms.insert(sm);
        }
        --st.running_xfers;
      } else {
        events_.push_back({r, prog_.ranks[r].comm[m.stream].name,
                           m.dispatched, now_, label, m.waited});
        comm_[r][m.stream].busy = false;
      }
      fire_later(op_signal(m.op), prog_.profile.signal_latency);
    }
  }

  void handle(const Timer& t) {
    switch (t.kind) {
      case kTileDone: {
        RunningTile& rt = tiles_[t.b];
        ComputeState& st = compute_[rt.rank];
        const TileProgram& p = *prog_.workload.program;
        size_t w = 0;
        for (const TileAccess& a : p.accesses) {
          if (!a.write) continue;
          const Region reg = p.region(a, rt.tile);
          grid(rt.rank, reg).for_each(reg, [](Cell& c) {
            --c.pending;
            c.valid = true;
          });
          if (store_) {
            store_->overwrite(rt.rank, reg.tensor_id, index_of(reg),
                              rt.out[w]);
          }
          ++w;
        }
        rt.out.clear();
        st.free_sms.insert(rt.sm);
        --st.running_tiles;
        events_.push_back({rt.rank, "sm" + std::to_string(rt.sm), rt.start,
                           now_, "tile " + std::to_string(rt.tile),
                           rt.waited});
        auto it = counters_of_.find({rt.rank, rt.tile});
        if (it != counters_of_.end()) {
          for (size_t c : it->second) {
            if (--counter_left_[c] == 0) {
              fire_later(prog_.counters[c].name, prog_.profile.signal_latency);
            }
          }
        }
        break;
      }
      case kPhaseDone: {
        ComputeState& st = compute_[t.a];
        const StreamItem& it = prog_.ranks[t.a].compute.items[st.head];
        events_.push_back({t.a, "host", st.phase_start, now_,
                           to_string(it.kind), std::move(st.waited)});
        st.waited.clear();
        st.phase_busy = false;
        ++st.head;
        break;
      }
      case kLatencyDone:
        start_flows(t.a);
        break;
      case kSignal:
        if (signal_time_[t.a] < 0) signal_time_[t.a] = now_;
        break;
    }
  }

  // ---- termination -------------------------------------------------------

  std::string describe_op(const OpRef& o) {
    const BackendKind kind = prog_.assignment.at(o);
    std::string where = is_colocated(kind)
                            ? "compute stream of rank " + std::to_string(o.rank)
                            : std::string(to_string(kind)) + " stream of rank " +
                                  std::to_string(o.rank);
    return "op " + to_string(o) + " on the " + where;
  }

  // The signal a stream head is blocked on, if any.
  std::optional<std::string> blocked_signal(int r, int stream) {
    const Stream& s = stream < 0 ? prog_.ranks[r].compute
                                 : prog_.ranks[r].comm[stream];
    const size_t head = stream < 0 ? compute_[r].head : comm_[r][stream].head;
    if (head >= s.items.size()) return std::nullopt;
    const StreamItem& it = s.items[head];
    if (it.kind == ItemKind::wait && !fired(it.signal)) return it.signal;
    return std::nullopt;
  }

  void check_finished() {
    std::vector<std::string> lines;
    std::optional<std::pair<int, int>> first_blocked;
    for (int r = 0; r < s_.world_size; ++r) {
      for (int k = -1; k < static_cast<int>(comm_[r].size()); ++k) {
        const Stream& s = k < 0 ? prog_.ranks[r].compute : prog_.ranks[r].comm[k];
        const size_t head = k < 0 ? compute_[r].head : comm_[r][k].head;
        const bool busy = k < 0 ? compute_[r].phase_busy : comm_[r][k].busy;
        if (head >= s.items.size() && !busy) continue;
        std::string line = "rank " + std::to_string(r) + " " + s.name + ": ";
        if (auto sig = blocked_signal(r, k)) {
          line += "waits for " + *sig;
          if (!first_blocked) first_blocked = {r, k};
        } else if (busy) {
          line += "transfer never completed";
        } else {
          line += "stalled at item " + std::to_string(head) + " (" +
                  to_string(s.items[head].kind) + ")";
        }
        lines.push_back(line);
      }
    }
    for (size_t g = 0; g < arrivals_.size(); ++g) {
      if (arrivals_[g].empty()) continue;
      lines.push_back("collective group of " + to_string(groups_[g][0]) +
                      " has " + std::to_string(arrivals_[g].size()) + " of " +
                      std::to_string(groups_[g].size()) + " members");
    }
    if (lines.empty()) return;
    std::string msg = "deadlock at t=" + std::to_string(now_ * 1e6) + "us";
    for (const auto& l : lines) msg += "\n  " + l;
    if (first_blocked) msg += "\n  wait-for chain: " + wait_chain(*first_blocked);
    throw Error(msg);
  }

  std::string wait_chain(std::pair<int, int> at) {
    std::string out;
    std::set<std::pair<int, int>> seen;
    while (seen.insert(at).second) {
      auto sig = blocked_signal(at.first, at.second);
      if (!sig) break;
      if (!out.empty()) out += " -> ";
      out += *sig;
      if (sig->rfind("op:", 0) != 0) break;
      const auto colon = sig->find(':', 3);
      const OpRef o{std::stoi(sig->substr(3, colon - 3)),
                    std::stoi(sig->substr(colon + 1))};
      out += " (" + describe_op(o) + ")";
      const BackendKind kind = prog_.assignment.at(o);
      int stream = -1;
      if (!is_colocated(kind)) {
        const auto& comm = prog_.ranks[o.rank].comm;
        for (size_t k = 0; k < comm.size(); ++k) {
          if (comm[k].backend == kind) stream = static_cast<int>(k);
        }
      }
      at = {o.rank, stream};
    }
    return out;
  }

  Timeline build_timeline() {
    Timeline t;
    t.events = std::move(events_);
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const TimelineEvent& a, const TimelineEvent& b) {
                       return std::tie(a.rank, a.resource, a.start) <
                              std::tie(b.rank, b.resource, b.start);
                     });
    for (const auto& e : t.events) t.makespan = std::max(t.makespan, e.end);
    for (size_t k = 0; k < signal_names_.size(); ++k) {
      if (signal_time_[k] >= 0) t.signal_times[signal_names_[k]] = signal_time_[k];
    }
    std::map<std::string, double> busy;
    double tile_busy = 0;
    for (const auto& e : t.events) {
      busy[std::to_string(e.rank) + "/" + e.resource] += e.end - e.start;
      if (e.label.rfind("tile ", 0) == 0) tile_busy += e.end - e.start;
    }
    double sm_total = 0;
    for (const auto& rp : prog_.ranks) sm_total += rp.compute_sms;
    if (t.makespan > 0) {
      for (const auto& [k, b] : busy) t.utilization[k] = b / t.makespan;
      if (sm_total > 0) t.compute_utilization = tile_busy / (t.makespan * sm_total);
    }
    return t;
  }

  const DeviceProgram& prog_;
  const SimConfig& cfg_;
  const CommSchedule& s_;
  std::map<std::string, TensorSpec> tensors_;
  std::mt19937_64 rng_;
  int straggler_ = -1;
  std::optional<ValueStore> store_;
  std::vector<std::map<std::string, CellGrid>> grids_;
  std::vector<std::vector<std::vector<Access>>> accesses_;

  std::map<OpRef, size_t> group_of_;
  std::vector<std::vector<OpRef>> groups_;
  std::vector<std::vector<Member>> arrivals_;

  std::vector<ComputeState> compute_;
  std::vector<std::vector<CommState>> comm_;
  std::vector<int> counter_left_;
  std::map<std::pair<int, int64_t>, std::vector<size_t>> counters_of_;

  std::map<std::string, int> signal_ids_;
  std::vector<std::string> signal_names_;
  std::vector<double> signal_time_;

  std::priority_queue<Timer, std::vector<Timer>, std::greater<Timer>> timers_;
  uint64_t seq_ = 0;
  double now_ = 0;
  std::vector<RunningTile> tiles_;
  std::vector<Xfer> xfers_;
  std::vector<Flow> flows_;
  bool rates_dirty_ = false;

  std::vector<TimelineEvent> events_;
  std::vector<Violation> violations_;
};

bool payload_enabled(const DeviceProgram& p, const SimConfig& cfg) {
  switch (cfg.payload) {
    case PayloadMode::on: return true;
    case PayloadMode::off: return false;
    case PayloadMode::automatic: break;
  }
  int64_t total = 0;
  for (const auto& [id, t] : workload_tensors(p.workload)) total += t.elements();
  return total * p.workload.schedule.world_size <= cfg.auto_payload_limit;
}

}  // namespace

SimResult simulate(const DeviceProgram& program, const SimConfig& cfg) {
  if (!payload_enabled(program, cfg)) {
    return Engine(program, cfg, nullptr).run();
  }
  const Buffers inputs = make_inputs(program.workload, cfg.payload_seed);
  return Engine(program, cfg, &inputs).run();
}

SimResult simulate(const DeviceProgram& program, const SimConfig& cfg,
                   const Buffers& inputs) {
  return Engine(program, cfg, &inputs).run();
}

OverlapReport compare_overlap_modes(const Workload& w, const Plan& plan,
                                    const Assignment& assignment,
                                    const BackendProfile& profile,
                                    const SimConfig& cfg, int comm_sms) {
  RealizeOptions opt;
  opt.device_sms = cfg.sms_per_device;
  opt.comm_sms = comm_sms;
  opt.launch_overhead = cfg.launch_overhead;
  OverlapReport rep;
  opt.mode = OverlapMode::fused;
  const SimResult fused = simulate(realize(w, plan, assignment, profile, opt), cfg);
  opt.mode = OverlapMode::partitioned;
  const SimResult part = simulate(realize(w, plan, assignment, profile, opt), cfg);
  rep.fused_makespan = fused.timeline.makespan;
  rep.partitioned_makespan = part.timeline.makespan;
  rep.fused_utilization = fused.timeline.compute_utilization;
  rep.partitioned_utilization = part.timeline.compute_utilization;
  return rep;
}

}  // namespace chunksched
