// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/tune.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "chunksched/error.hpp"

namespace chunksched {

std::vector<TuneConfig> enumerate_space(const TuneSpace& space) {
  std::vector<TuneConfig> out;
  for (int split : space.splits) {
    for (int axis : space.split_axes) {
      for (BackendKind b : space.backends) {
        for (BackendKind rb : space.reduce_backends) {
          for (int sms : space.comm_sms) {
            for (const IntraPolicy& intra : space.intra) {
              for (const TileConfig& t : space.tiles) {
                out.push_back({split, axis, b, rb, sms, intra, t});
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Workload apply_config(const Workload& base, const TuneConfig& c) {
  Workload w = base;
  if (c.split != 1) {
    w.schedule = split_schedule(base.schedule, c.split, c.split_axis);
  }
  if (w.program && (c.tile.bm > 0 || c.tile.bn > 0 || c.tile.bk > 0)) {
    w.program = with_tile_config(*w.program, c.tile.bm, c.tile.bn, c.tile.bk);
  }
  return w;
}

namespace {

// Boundaries of `r` along dims mapped to spatial axes must fall on tile
// block edges (or the tensor end).
bool aligned(const TileProgram& p, const Region& r) {
  for (const TileAccess& a : p.accesses) {
    if (a.tensor_id != r.tensor_id) continue;
    for (size_t d = 0; d < a.dims.size() && d < r.offsets.size(); ++d) {
      const std::string& name = a.dims[d];
      bool spatial = false;
      for (const std::string& s : p.spatial) spatial = spatial || s == name;
      if (!spatial) continue;
      const Axis& ax = p.axis(name);
      const int64_t lo = r.offsets[d], hi = lo + r.sizes[d];
      if (lo % ax.block != 0) return false;
      if (hi % ax.block != 0 && hi != ax.extent) return false;
    }
  }
  return true;
}

}  // namespace

std::string prune_reason(const Workload& w, const TuneConfig& c,
                         const BackendProfile& profile, int device_sms) {
  const CommSchedule& s = w.schedule;
  const Assignment a = uniform_assignment(s, c.backend, c.reduce_backend);
  bool specialized = false;
  for (const auto& [ref, kind] : a) {
    const Feasibility f = feasible(s.op(ref), s, kind, profile);
    if (!f.ok()) return f.reason + " (" + to_string(kind) + ")";
    specialized = specialized || is_specialized(kind);
  }
  if (c.comm_sms < 0 || c.comm_sms + 1 > device_sms) {
    return "comm SMs " + std::to_string(c.comm_sms) + " exceed device";
  }
  if (specialized && c.comm_sms == 0) return "specialized backend needs comm SMs";
  if (!specialized && c.comm_sms > 0) {
    return "comm SMs without a specialized backend";
  }
  if (w.program) {
    for (const OpRef& ref : s.all_ops()) {
      const CommOp& op = s.op(ref);
      if (!aligned(*w.program, op.src_chunk().region) ||
          !aligned(*w.program, op.dst_chunk().region)) {
        return "tile misalignment at op " + to_string(ref);
      }
    }
  }
  return "";
}

TuneRow evaluate(const Workload& base, const TuneConfig& c,
                 const BackendProfile& profile, const SimConfig& cfg) {
  TuneRow row;
  row.config = c;
  Workload w;
  try {
    w = apply_config(base, c);
  } catch (const Error& e) {
    row.pruned_reason = e.what();
    return row;
  }
  row.pruned_reason = prune_reason(w, c, profile, cfg.sms_per_device);
  if (!row.pruned_reason.empty()) return row;
  SimConfig sc = cfg;
  sc.payload = PayloadMode::off;
  sc.jitter.enabled = false;
  try {
    const Plan plan = plan_workload(w, c.intra);
    RealizeOptions opt;
    opt.device_sms = cfg.sms_per_device;
    opt.comm_sms = c.comm_sms;
    opt.launch_overhead = cfg.launch_overhead;
    const DeviceProgram prog = realize(
        w, plan, uniform_assignment(w.schedule, c.backend, c.reduce_backend),
        profile, opt);
    const SimResult r = simulate(prog, sc);
    if (!r.violations.empty()) {
      row.pruned_reason = "violation: " + r.violations[0].code;
      return row;
    }
    row.makespan = r.timeline.makespan;
    row.feasible = true;
  } catch (const Error& e) {
    row.pruned_reason = std::string("realize: ") + e.what();
  }
  return row;
}

namespace {

TuneResult select(std::vector<TuneRow> rows) {
  TuneResult r;
  r.rows = std::move(rows);
  for (size_t i = 0; i < r.rows.size(); ++i) {
    const TuneRow& row = r.rows[i];
    // Strict comparison keeps the earliest (lexicographically first) config.
    if (row.feasible && (r.best < 0 || row.makespan < r.best_makespan)) {
      r.best = static_cast<int>(i);
      r.best_makespan = row.makespan;
    }
  }
  return r;
}

}  // namespace

TuneResult tune(const TuneSpace& space, const Workload& base,
                const BackendProfile& profile, const SimConfig& cfg) {
  const std::vector<TuneConfig> configs = enumerate_space(space);
  std::vector<TuneRow> rows(configs.size());
  const int n = static_cast<int>(configs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    rows[i] = evaluate(base, configs[i], profile, cfg);
  }
  return select(std::move(rows));
}

TuneResult tune_serial(const TuneSpace& space, const Workload& base,
                       const BackendProfile& profile, const SimConfig& cfg) {
  std::vector<TuneRow> rows;
  for (const TuneConfig& c : enumerate_space(space)) {
    rows.push_back(evaluate(base, c, profile, cfg));
  }
  return select(std::move(rows));
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string us(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", seconds * 1e6);
  return buf;
}

}  // namespace

std::string tune_csv(const TuneResult& r) {
  std::ostringstream out;
  out << "split,split_axis,backend,reduce_backend,comm_sms,intra,block_m,"
         "block_n,block_k,stages,makespan_us,feasible,pruned_reason,best\n";
  for (size_t i = 0; i < r.rows.size(); ++i) {
    const TuneRow& row = r.rows[i];
    const TuneConfig& c = row.config;
    out << c.split << ',' << c.split_axis << ',' << to_string(c.backend) << ','
        << to_string(c.reduce_backend) << ',' << c.comm_sms << ','
        << csv_field(to_string(c.intra)) << ',' << c.tile.bm << ','
        << c.tile.bn << ',' << c.tile.bk << ',' << c.tile.stages << ','
        << (row.feasible ? us(row.makespan) : "") << ','
        << (row.feasible ? 1 : 0) << ',' << csv_field(row.pruned_reason) << ','
        << (static_cast<int>(i) == r.best ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string sweep_csv(const TuneResult& r) {
  std::map<int, double> by_split, by_sms;
  for (const TuneRow& row : r.rows) {
    if (!row.feasible) continue;
    auto take = [&](std::map<int, double>& m, int key) {
      auto it = m.find(key);
      if (it == m.end() || row.makespan < it->second) m[key] = row.makespan;
    };
    take(by_split, row.config.split);
    take(by_sms, row.config.comm_sms);
  }
  std::ostringstream out;
  out << "knob,value,best_makespan_us\n";
  for (const auto& [k, v] : by_split) out << "split," << k << ',' << us(v) << '\n';
  for (const auto& [k, v] : by_sms) out << "comm_sms," << k << ',' << us(v) << '\n';
  return out.str();
}

Json config_to_json(const TuneConfig& c) {
  return Json{{"split", c.split},
              {"split_axis", c.split_axis},
              {"backend", to_string(c.backend)},
              {"reduce_backend", to_string(c.reduce_backend)},
              {"comm_sms", c.comm_sms},
              {"intra", to_string(c.intra)},
              {"tile",
               {{"block_m", c.tile.bm},
                {"block_n", c.tile.bn},
                {"block_k", c.tile.bk},
                {"stages", c.tile.stages}}}};
}

std::string prune_summary(const TuneResult& r) {
  std::map<std::string, int> counts;
  for (const TuneRow& row : r.rows) {
    if (row.feasible) continue;
    // Group on the reason up to the first detail.
    std::string key = row.pruned_reason;
    const auto colon = key.find(':');
    if (colon != std::string::npos) key = key.substr(0, colon);
    ++counts[key];
  }
  std::ostringstream out;
  for (const auto& [k, n] : counts) out << k << ": " << n << '\n';
  return out.str();
}

}  // namespace chunksched
