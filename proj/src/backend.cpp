// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/backend.hpp"

#include <algorithm>

#include "chunksched/error.hpp"

namespace chunksched {

const char* to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::copy_engine: return "copy_engine";
    case BackendKind::tma_specialized: return "tma_specialized";
    case BackendKind::tma_colocated: return "tma_colocated";
    case BackendKind::ldst_specialized: return "ldst_specialized";
    case BackendKind::ldst_colocated: return "ldst_colocated";
  }
  return "?";
}

BackendKind backend_from_string(const std::string& name) {
  for (BackendKind k : all_backends()) {
    if (name == to_string(k)) return k;
  }
  throw ParseError("unknown backend '" + name + "'");
}

const std::vector<BackendKind>& all_backends() {
  static const std::vector<BackendKind> kinds = {
      BackendKind::copy_engine, BackendKind::tma_specialized,
      BackendKind::tma_colocated, BackendKind::ldst_specialized,
      BackendKind::ldst_colocated};
  return kinds;
}

bool is_specialized(BackendKind kind) {
  return kind == BackendKind::tma_specialized ||
         kind == BackendKind::ldst_specialized;
}

bool is_colocated(BackendKind kind) {
  return kind == BackendKind::tma_colocated ||
         kind == BackendKind::ldst_colocated;
}

const BackendCostParams& BackendProfile::at(BackendKind kind) const {
  auto it = backends.find(kind);
  if (it == backends.end()) {
    throw Error(std::string("profile '") + name + "' has no parameters for " +
                to_string(kind));
  }
  return it->second;
}

BackendProfile h100_profile() {
  BackendProfile p;
  p.name = "h100";
  p.signal_latency = 0.5 * 1e-6;
  BackendCostParams ce;
  ce.peak_bw = 400;
  ce.launch_latency = 2.5 * 1e-6;
  ce.min_efficient_bytes = 1 << 20;
  p.backends[BackendKind::copy_engine] = ce;

  BackendCostParams tma;
  tma.peak_bw = 300;
  tma.launch_latency = 1.0 * 1e-6;
  tma.per_sm_bw = 18.75;
  tma.max_useful_sms = 16;
  tma.supports_strided = true;
  tma.consumes_sms = true;
  p.backends[BackendKind::tma_specialized] = tma;
  p.backends[BackendKind::tma_colocated] = tma;

  BackendCostParams ldst;
  ldst.peak_bw = 250;
  ldst.launch_latency = 0.5 * 1e-6;
  ldst.per_sm_bw = 20;
  ldst.max_useful_sms = 16;
  ldst.supports_collective_reduce = true;
  ldst.supports_strided = true;
  ldst.consumes_sms = true;
  p.backends[BackendKind::ldst_specialized] = ldst;
  p.backends[BackendKind::ldst_colocated] = ldst;
  return p;
}

BackendProfile profile_from_json(const Json& j) {
  try {
    BackendProfile p;
    p.name = j.value("name", "");
    p.signal_latency = j.value("signal_latency_us", 0.0) * 1e-6;
    for (const auto& [name, b] : j.at("backends").items()) {
      BackendCostParams c;
      c.peak_bw = b.at("peak_bw_gbps").get<double>();
      c.launch_latency = b.at("launch_latency_us").get<double>() * 1e-6;
      c.per_sm_bw = b.value("per_sm_bw_gbps", 0.0);
      c.max_useful_sms = b.value("max_useful_sms", 0);
      c.min_efficient_bytes = b.value("min_efficient_bytes", int64_t{0});
      c.supports_collective_reduce = b.at("supports_collective_reduce");
      c.supports_strided = b.at("supports_strided");
      c.consumes_sms = b.at("consumes_sms");
      if (c.peak_bw <= 0 || c.launch_latency < 0 ||
          (c.consumes_sms && (c.per_sm_bw <= 0 || c.max_useful_sms < 1))) {
        throw ParseError("backend " + name + " has non-positive rates");
      }
      p.backends[backend_from_string(name)] = c;
    }
    return p;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad backend profile: ") + e.what());
  }
}

Json profile_to_json(const BackendProfile& p) {
  Json backends = Json::object();
  for (const auto& [kind, c] : p.backends) {
    backends[to_string(kind)] = {
        {"peak_bw_gbps", c.peak_bw},
        {"launch_latency_us", c.launch_latency * 1e6},
        {"per_sm_bw_gbps", c.per_sm_bw},
        {"max_useful_sms", c.max_useful_sms},
        {"min_efficient_bytes", c.min_efficient_bytes},
        {"supports_collective_reduce", c.supports_collective_reduce},
        {"supports_strided", c.supports_strided},
        {"consumes_sms", c.consumes_sms}};
  }
  return Json{{"name", p.name},
              {"signal_latency_us", p.signal_latency * 1e6},
              {"backends", backends}};
}

BackendProfile load_profile(const std::string& path) {
  return profile_from_json(read_json_file(path));
}

double driver_cap(BackendKind kind, int sms, const BackendProfile& profile) {
  const BackendCostParams& c = profile.at(kind);
  if (!c.consumes_sms) return c.peak_bw * 1e9;
  const int used = std::min(std::max(sms, 1), c.max_useful_sms);
  return std::min(c.peak_bw, c.per_sm_bw * used) * 1e9;
}

double effective_bandwidth(double bytes, BackendKind kind, int sms,
                           const BackendProfile& profile) {
  if (bytes <= 0) return 0;
  const double cap = driver_cap(kind, sms, profile);
  const double seconds = profile.at(kind).launch_latency + bytes / cap;
  return bytes / seconds / 1e9;
}

int64_t op_bytes(const CommOp& op, const CommSchedule& s) {
  if (op.is_p2p()) {
    const Region& r = op.p2p().src_chunk.region;
    return byte_volume(r, s.tensor(r.tensor_id));
  }
  const Collective& c = op.collective();
  const Region& r =
      c.collective_type == CollectiveType::reduce_scatter ? c.dst_chunk.region
                                                          : c.src_chunk.region;
  return byte_volume(r, s.tensor(r.tensor_id));
}

Feasibility feasible(const CommOp& op, const CommSchedule& s, BackendKind kind,
                     const BackendProfile& profile) {
  using V = Feasibility::Verdict;
  const BackendCostParams& c = profile.at(kind);
  const bool reduces =
      op.accumulates() ||
      (!op.is_p2p() &&
       op.collective().collective_type != CollectiveType::allgather &&
       op.collective().collective_type != CollectiveType::all_to_all);
  if (reduces && !c.supports_collective_reduce) {
    return {V::illegal, "no reduction support"};
  }
  if (!c.supports_strided) {
    for (const Chunk* ch : {&op.src_chunk(), &op.dst_chunk()}) {
      const auto& shape = s.tensor(ch->region.tensor_id).shape;
      if (!is_contiguous(ch->region, shape)) {
        return {V::illegal, "non-contiguous chunk " + to_string(ch->region) +
                                " needs strided support"};
      }
    }
  }
  const int64_t bytes = op_bytes(op, s);
  if (bytes < c.min_efficient_bytes) {
    return {V::inefficient,
            "inefficient: " + std::to_string(bytes) + " bytes below minimum " +
                std::to_string(c.min_efficient_bytes)};
  }
  return {};
}

}  // namespace chunksched
