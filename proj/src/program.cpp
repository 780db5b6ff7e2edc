// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/program.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "chunksched/error.hpp"

namespace chunksched {

namespace {

bool reduces(const CommOp& op) {
  if (op.accumulates()) return true;
  if (op.is_p2p()) return false;
  const auto t = op.collective().collective_type;
  return t == CollectiveType::reduce_scatter || t == CollectiveType::allreduce;
}

}  // namespace

Assignment uniform_assignment(const CommSchedule& s, BackendKind move,
                              BackendKind reduce) {
  Assignment a;
  for (const OpRef& o : s.all_ops()) a[o] = reduces(s.op(o)) ? reduce : move;
  return a;
}

Plan plan_workload(const Workload& w, const IntraPolicy& intra) {
  Plan plan;
  for (int r = 0; r < w.schedule.world_size; ++r) {
    plan.graphs.push_back(build_depgraph(w, r));
    plan.swizzles.push_back(swizzle_to_chunk_order(w, r, intra));
    plan.syncs.push_back(
        insert_min_syncs(plan.graphs[r], w.schedule, plan.swizzles[r].order));
  }
  return plan;
}

const char* to_string(OverlapMode mode) {
  return mode == OverlapMode::fused ? "fused" : "partitioned";
}

const char* to_string(ItemKind kind) {
  switch (kind) {
    case ItemKind::tile: return "tile";
    case ItemKind::wait: return "wait";
    case ItemKind::transfer: return "transfer";
    case ItemKind::launch: return "launch";
    case ItemKind::barrier: return "barrier";
  }
  return "?";
}

namespace {

ItemKind item_kind_from_string(const std::string& name) {
  for (ItemKind k : {ItemKind::tile, ItemKind::wait, ItemKind::transfer,
                     ItemKind::launch, ItemKind::barrier}) {
    if (name == to_string(k)) return k;
  }
  throw ParseError("unknown stream item kind '" + name + "'");
}

StreamItem wait_item(const std::string& signal, bool planned) {
  StreamItem it;
  it.kind = ItemKind::wait;
  it.signal = signal;
  it.planned = planned;
  return it;
}

StreamItem transfer_item(const OpRef& op) {
  StreamItem it;
  it.kind = ItemKind::transfer;
  it.op = op;
  return it;
}

StreamItem timed_item(ItemKind kind, double duration) {
  StreamItem it;
  it.kind = kind;
  it.duration = duration;
  return it;
}

// Appends a wait unless the stream already waited for the same signal.
void add_wait(std::vector<StreamItem>& items, std::set<std::string>& seen,
              const std::string& signal, bool planned) {
  if (seen.insert(signal).second) items.push_back(wait_item(signal, planned));
}

void check_assignment(const CommSchedule& s, const Assignment& a,
                      const BackendProfile& profile) {
  std::vector<std::string> bad;
  for (const OpRef& o : s.all_ops()) {
    auto it = a.find(o);
    if (it == a.end()) {
      bad.push_back(to_string(o) + ": no backend assigned");
      continue;
    }
    const Feasibility f = feasible(s.op(o), s, it->second, profile);
    if (!f.legal()) {
      bad.push_back(to_string(o) + " on " + to_string(it->second) + ": " +
                    f.reason);
    }
  }
  if (bad.empty()) return;
  std::string msg = "infeasible backend assignment:";
  for (const auto& b : bad) msg += "\n  " + b;
  throw Error(msg);
}

}  // namespace

DeviceProgram realize(const Workload& w, const Plan& plan,
                      const Assignment& assignment,
                      const BackendProfile& profile,
                      const RealizeOptions& options) {
  const CommSchedule& s = w.schedule;
  const int world = s.world_size;
  check_assignment(s, assignment, profile);
  if (static_cast<int>(plan.syncs.size()) != world) {
    throw Error("plan covers " + std::to_string(plan.syncs.size()) +
                " ranks, schedule has " + std::to_string(world));
  }

  bool specialized = false;
  for (const auto& [op, kind] : assignment) specialized |= is_specialized(kind);
  if (options.comm_sms < 0 || options.comm_sms + 1 > options.device_sms) {
    throw Error("comm SMs " + std::to_string(options.comm_sms) +
                " leave no compute SMs");
  }
  if (specialized && options.comm_sms == 0) {
    throw Error("specialized backend needs comm SMs");
  }
  if (!specialized && options.comm_sms > 0) {
    throw Error("comm SMs allocated without a specialized backend");
  }

  DeviceProgram out;
  out.workload = w;
  out.profile = profile;
  out.assignment = assignment;
  out.mode = options.mode;
  out.ranks.resize(world);

  std::vector<std::map<int64_t, std::vector<std::string>>> tile_waits(world);
  std::map<OpRef, std::vector<std::string>> op_waits;
  std::set<std::string> counter_names;
  for (const SyncPlan& sp : plan.syncs) {
    for (const SyncPoint& pt : sp.points) {
      if (pt.kind == SyncPoint::Kind::wait) {
        if (pt.stream == SyncPoint::Stream::tiles) {
          tile_waits[pt.rank][pt.position].push_back(pt.signal);
        } else {
          op_waits[pt.op].push_back(pt.signal);
        }
      } else if (pt.stream == SyncPoint::Stream::tiles &&
                 counter_names.insert(pt.signal).second) {
        out.counters.push_back({pt.signal, pt.rank, pt.tiles});
      }
    }
  }

  auto op_items = [&](const OpRef& o, std::vector<StreamItem>& items,
                      std::set<std::string>& seen, bool fifo) {
    const BackendKind kind = assignment.at(o);
    for (const Dependency& d : s.op(o).deps) {
      // A FIFO engine finishes earlier ops of its own queue first.
      if (fifo && d.rank == o.rank && d.index < o.index &&
          assignment.at(d) == kind) {
        continue;
      }
      add_wait(items, seen, op_signal(d), false);
    }
    auto it = op_waits.find(o);
    if (it != op_waits.end()) {
      for (const auto& sig : it->second) add_wait(items, seen, sig, true);
    }
    items.push_back(transfer_item(o));
  };

  // Colocated transfers share the in-order compute stream with the tiles.
  // They are placed along one global order in which every wait refers to
  // something placed earlier, so no two ranks can block on each other.
  std::map<OpRef, int64_t> slot_of;
  std::vector<OpRef> placement;
  {
    std::map<std::string, OpRef> op_of_signal;
    for (const OpRef& o : s.all_ops()) op_of_signal[op_signal(o)] = o;
    std::map<std::string, std::pair<int, int64_t>> counter_end;
    for (const CounterSignal& c : out.counters) {
      const auto& tord = plan.swizzles[c.rank].order;
      int64_t last = -1;
      for (int64_t t : c.tiles) {
        last = std::max<int64_t>(
            last, std::find(tord.begin(), tord.end(), t) - tord.begin());
      }
      counter_end[c.name] = {c.rank, last};
    }
    std::vector<int64_t> placed(world, 0);
    std::set<OpRef> done;
    auto ready_signal = [&](const std::string& sig) {
      if (auto it = op_of_signal.find(sig); it != op_of_signal.end()) {
        return done.count(it->second) > 0;
      }
      const auto& [rank, last] = counter_end.at(sig);
      return placed[rank] > last;
    };
    auto ready_op = [&](const OpRef& o) {
      for (const Dependency& d : s.op(o).deps) {
        if (!done.count(d)) return false;
      }
      if (auto it = op_waits.find(o); it != op_waits.end()) {
        for (const auto& sig : it->second) {
          if (!ready_signal(sig)) return false;
        }
      }
      return true;
    };
    std::vector<std::vector<OpRef>> fifo, colocated(world);
    std::vector<size_t> head;
    for (int r = 0; r < world; ++r) {
      std::map<BackendKind, std::vector<OpRef>> by_kind;
      for (int i = 0; i < static_cast<int>(s.plans[r].size()); ++i) {
        const BackendKind kind = assignment.at({r, i});
        if (is_colocated(kind)) {
          colocated[r].push_back({r, i});
        } else {
          by_kind[kind].push_back({r, i});
        }
      }
      for (auto& [kind, ops] : by_kind) fifo.push_back(std::move(ops));
    }
    head.assign(fifo.size(), 0);
    for (;;) {
      bool progress = false;
      for (bool again = true; again;) {
        again = false;
        for (size_t f = 0; f < fifo.size(); ++f) {
          while (head[f] < fifo[f].size() && ready_op(fifo[f][head[f]])) {
            done.insert(fifo[f][head[f]++]);
            again = true;
          }
        }
        for (int r = 0; r < world; ++r) {
          for (const OpRef& o : colocated[r]) {
            if (done.count(o) || !ready_op(o)) continue;
            done.insert(o);
            slot_of[o] = placed[r];
            placement.push_back(o);
            again = true;
          }
        }
        progress |= again;
      }
      for (int r = 0; r < world; ++r) {
        const int64_t n = plan.swizzles[r].order.size();
        if (placed[r] >= n) continue;
        bool ok = true;
        if (auto it = tile_waits[r].find(placed[r]); it != tile_waits[r].end()) {
          for (const auto& sig : it->second) ok = ok && ready_signal(sig);
        }
        if (ok) {
          ++placed[r];
          progress = true;
        }
      }
      if (!progress) break;
    }
    std::vector<std::string> stuck;
    for (const OpRef& o : s.all_ops()) {
      if (!done.count(o)) stuck.push_back(to_string(o));
    }
    if (!stuck.empty()) {
      std::string msg = "no deadlock-free stream order for ops:";
      for (const auto& x : stuck) msg += " " + x;
      throw Error(msg);
    }
  }

  for (int r = 0; r < world; ++r) {
    RankProgram& rp = out.ranks[r];
    rp.comm_sms = specialized ? options.comm_sms : 0;
    rp.compute_sms = options.device_sms - rp.comm_sms;

    std::map<BackendKind, Stream> streams;
    std::map<BackendKind, std::set<std::string>> seen;
    for (int i = 0; i < static_cast<int>(s.plans[r].size()); ++i) {
      const OpRef o{r, i};
      const BackendKind kind = assignment.at(o);
      if (is_colocated(kind)) continue;
      Stream& st = streams[kind];
      st.name = to_string(kind);
      st.backend = kind;
      op_items(o, st.items, seen[kind], true);
    }
    int n_specialized = 0;
    for (const auto& [kind, st] : streams) n_specialized += is_specialized(kind);
    for (auto& [kind, st] : streams) {
      if (is_specialized(kind)) {
        st.sms = rp.comm_sms / n_specialized;
        if (st.sms < 1) {
          throw Error("comm SMs " + std::to_string(rp.comm_sms) +
                      " cannot drive " + std::to_string(n_specialized) +
                      " specialized streams");
        }
      }
      rp.comm.push_back(std::move(st));
    }

    // Compute stream: tiles in swizzled order, planner waits, and colocated
    // transfers placed where their inputs are ready.
    const auto& tile_order = plan.swizzles[r].order;
    const int64_t n = static_cast<int64_t>(tile_order.size());
    std::map<int64_t, std::vector<OpRef>> at_slot;
    for (const OpRef& o : placement) {
      if (o.rank == r) at_slot[slot_of.at(o)].push_back(o);
    }

    struct Tagged {
      StreamItem item;
      int64_t slot;
    };
    std::vector<Tagged> body;
    std::set<std::string> compute_seen;
    for (int64_t p = 0; p <= n; ++p) {
      if (auto it = at_slot.find(p); it != at_slot.end()) {
        for (const OpRef& o : it->second) {
          std::vector<StreamItem> items;
          op_items(o, items, compute_seen, false);
          for (auto& item : items) body.push_back({item, p});
        }
      }
      if (p == n) break;
      if (auto it = tile_waits[r].find(p); it != tile_waits[r].end()) {
        std::vector<StreamItem> items;
        for (const auto& sig : it->second) {
          add_wait(items, compute_seen, sig, true);
        }
        for (auto& item : items) body.push_back({item, p});
      }
      StreamItem tile;
      tile.kind = ItemKind::tile;
      tile.tile = tile_order[p];
      body.push_back({tile, p});
    }

    Stream& cs = rp.compute;
    cs.name = "compute";
    const bool has_kernel = w.program.has_value() && n > 0;
    if (options.mode == OverlapMode::fused || !has_kernel) {
      if (has_kernel) {
        cs.items.push_back(timed_item(ItemKind::launch, options.launch_overhead));
      }
      for (auto& t : body) cs.items.push_back(t.item);
    } else {
      // One sub-kernel per swizzle group: launch, the group's planner waits,
      // its items, then a device-wide barrier.
      const auto& starts = plan.swizzles[r].group_start;
      auto segment = [&](int64_t slot) {
        if (slot >= n) slot = n - 1;
        auto it = std::upper_bound(starts.begin(), starts.end(), slot);
        return static_cast<int64_t>(it - starts.begin()) - 1;
      };
      size_t k = 0;
      while (k < body.size()) {
        const int64_t seg = segment(body[k].slot);
        size_t end = k;
        while (end < body.size() && segment(body[end].slot) == seg) ++end;
        cs.items.push_back(timed_item(ItemKind::launch, options.launch_overhead));
        for (size_t x = k; x < end; ++x) {
          const StreamItem& it = body[x].item;
          if (it.kind == ItemKind::wait && it.planned) cs.items.push_back(it);
        }
        for (size_t x = k; x < end; ++x) {
          const StreamItem& it = body[x].item;
          if (!(it.kind == ItemKind::wait && it.planned)) cs.items.push_back(it);
        }
        cs.items.push_back(
            timed_item(ItemKind::barrier, options.launch_overhead));
        k = end;
      }
    }
  }
  return out;
}

namespace {

Json stream_to_json(const Stream& st) {
  Json items = Json::array();
  for (const StreamItem& it : st.items) {
    Json j{{"kind", to_string(it.kind)}};
    switch (it.kind) {
      case ItemKind::tile: j["tile"] = it.tile; break;
      case ItemKind::wait:
        j["signal"] = it.signal;
        j["planned"] = it.planned;
        break;
      case ItemKind::transfer: j["op"] = it.op; break;
      case ItemKind::launch:
      case ItemKind::barrier: j["duration_s"] = it.duration; break;
    }
    items.push_back(j);
  }
  Json j{{"name", st.name}, {"sms", st.sms}, {"items", items}};
  j["backend"] = st.backend ? Json(to_string(*st.backend)) : Json(nullptr);
  return j;
}

Stream stream_from_json(const Json& j) {
  Stream st;
  st.name = j.at("name").get<std::string>();
  st.sms = j.at("sms").get<int>();
  if (!j.at("backend").is_null()) {
    st.backend = backend_from_string(j.at("backend").get<std::string>());
  }
  for (const Json& x : j.at("items")) {
    StreamItem it;
    it.kind = item_kind_from_string(x.at("kind").get<std::string>());
    switch (it.kind) {
      case ItemKind::tile: it.tile = x.at("tile").get<int64_t>(); break;
      case ItemKind::wait:
        it.signal = x.at("signal").get<std::string>();
        it.planned = x.at("planned").get<bool>();
        break;
      case ItemKind::transfer: it.op = x.at("op").get<OpRef>(); break;
      case ItemKind::launch:
      case ItemKind::barrier: it.duration = x.at("duration_s").get<double>(); break;
    }
    st.items.push_back(it);
  }
  return st;
}

}  // namespace

Json program_to_json(const DeviceProgram& p) {
  Json assignment = Json::array();
  for (const auto& [op, kind] : p.assignment) {
    assignment.push_back({{"op", op}, {"backend", to_string(kind)}});
  }
  Json ranks = Json::array();
  for (const RankProgram& rp : p.ranks) {
    Json comm = Json::array();
    for (const Stream& st : rp.comm) comm.push_back(stream_to_json(st));
    ranks.push_back({{"compute_sms", rp.compute_sms},
                     {"comm_sms", rp.comm_sms},
                     {"compute", stream_to_json(rp.compute)},
                     {"comm", comm}});
  }
  Json counters = Json::array();
  for (const CounterSignal& c : p.counters) {
    counters.push_back({{"name", c.name}, {"rank", c.rank}, {"tiles", c.tiles}});
  }
  Json j{{"schedule", p.workload.schedule},
         {"profile", profile_to_json(p.profile)},
         {"mode", to_string(p.mode)},
         {"assignment", assignment},
         {"ranks", ranks},
         {"counters", counters}};
  j["program"] = p.workload.program ? Json(*p.workload.program) : Json(nullptr);
  return j;
}

DeviceProgram program_from_json(const Json& j) {
  try {
    DeviceProgram p;
    p.workload.schedule = j.at("schedule").get<CommSchedule>();
    if (!j.at("program").is_null()) {
      p.workload.program = j.at("program").get<TileProgram>();
    }
    p.profile = profile_from_json(j.at("profile"));
    const std::string mode = j.at("mode").get<std::string>();
    if (mode != "fused" && mode != "partitioned") {
      throw ParseError("unknown overlap mode '" + mode + "'");
    }
    p.mode = mode == "fused" ? OverlapMode::fused : OverlapMode::partitioned;
    for (const Json& a : j.at("assignment")) {
      p.assignment[a.at("op").get<OpRef>()] =
          backend_from_string(a.at("backend").get<std::string>());
    }
    for (const Json& r : j.at("ranks")) {
      RankProgram rp;
      rp.compute_sms = r.at("compute_sms").get<int>();
      rp.comm_sms = r.at("comm_sms").get<int>();
      rp.compute = stream_from_json(r.at("compute"));
      for (const Json& c : r.at("comm")) rp.comm.push_back(stream_from_json(c));
      p.ranks.push_back(std::move(rp));
    }
    for (const Json& c : j.at("counters")) {
      p.counters.push_back({c.at("name").get<std::string>(),
                            c.at("rank").get<int>(),
                            c.at("tiles").get<std::vector<int64_t>>()});
    }
    if (static_cast<int>(p.ranks.size()) != p.workload.schedule.world_size) {
      throw ParseError("device program rank count does not match world size");
    }
    return p;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad device program: ") + e.what());
  }
}

std::vector<WaitSite> planned_waits(const DeviceProgram& p) {
  std::vector<WaitSite> out;
  for (int r = 0; r < static_cast<int>(p.ranks.size()); ++r) {
    const RankProgram& rp = p.ranks[r];
    for (int s = -1; s < static_cast<int>(rp.comm.size()); ++s) {
      const Stream& st = s < 0 ? rp.compute : rp.comm[s];
      for (size_t k = 0; k < st.items.size(); ++k) {
        const StreamItem& it = st.items[k];
        if (it.kind == ItemKind::wait && it.planned) {
          out.push_back({r, s, k, it.signal});
        }
      }
    }
  }
  return out;
}

DeviceProgram drop_wait(const DeviceProgram& p, const WaitSite& site) {
  DeviceProgram out = p;
  RankProgram& rp = out.ranks.at(site.rank);
  Stream& st = site.stream < 0 ? rp.compute : rp.comm.at(site.stream);
  if (site.item >= st.items.size() ||
      st.items[site.item].kind != ItemKind::wait) {
    throw Error("no wait at the given stream position");
  }
  st.items.erase(st.items.begin() + site.item);
  return out;
}

}  // namespace chunksched
