// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/schedule_json.hpp"

#include <fstream>
#include <sstream>

#include "chunksched/error.hpp"

namespace chunksched {

void to_json(Json& j, const TensorSpec& t) {
  j = Json{{"tensor_id", t.id},
           {"shape", t.shape},
           {"elem_bytes", t.elem_bytes},
           {"global", t.global}};
}

void from_json(const Json& j, TensorSpec& t) {
  t.id = j.at("tensor_id").get<std::string>();
  t.shape = j.at("shape").get<std::vector<int64_t>>();
  t.elem_bytes = j.value("elem_bytes", 2);
  t.global = j.value("global", true);
}

void to_json(Json& j, const Region& r) {
  j = Json{{"tensor_id", r.tensor_id}, {"offsets", r.offsets},
           {"sizes", r.sizes}};
}

void from_json(const Json& j, Region& r) {
  r.tensor_id = j.at("tensor_id").get<std::string>();
  r.offsets = j.at("offsets").get<std::vector<int64_t>>();
  r.sizes = j.at("sizes").get<std::vector<int64_t>>();
}

void to_json(Json& j, const Chunk& c) {
  j = Json{{"region", c.region},
           {"layout", to_string(c.layout)},
           {"chunk_id", c.chunk_id}};
}

void from_json(const Json& j, Chunk& c) {
  c.region = j.at("region").get<Region>();
  c.layout = layout_from_string(j.value("layout", "row_major"));
  c.chunk_id = j.value("chunk_id", "");
}

void to_json(Json& j, const OpRef& d) {
  j = Json{{"rank", d.rank}, {"index", d.index}};
}

void from_json(const Json& j, OpRef& d) {
  d.rank = j.at("rank").get<int>();
  d.index = j.at("index").get<int>();
}

void to_json(Json& j, const CommOp& op) {
  if (op.is_p2p()) {
    const P2P& p = op.p2p();
    j = Json{{"type", "p2p"},
             {"direction", to_string(p.direction)},
             {"peer", p.peer},
             {"src_chunk", p.src_chunk},
             {"dst_chunk", p.dst_chunk},
             {"accumulate", p.accumulate}};
  } else {
    const Collective& c = op.collective();
    j = Json{{"type", "collective"},
             {"collective_type", to_string(c.collective_type)},
             {"src_chunk", c.src_chunk},
             {"dst_chunk", c.dst_chunk},
             {"ranks", c.ranks}};
  }
  j["deps"] = op.deps;
}

void from_json(const Json& j, CommOp& op) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "p2p") {
    P2P p;
    p.direction = direction_from_string(j.at("direction").get<std::string>());
    p.peer = j.at("peer").get<int>();
    p.src_chunk = j.at("src_chunk").get<Chunk>();
    p.dst_chunk = j.at("dst_chunk").get<Chunk>();
    p.accumulate = j.value("accumulate", false);
    op.op = p;
  } else if (type == "collective") {
    Collective c;
    c.collective_type =
        collective_from_string(j.at("collective_type").get<std::string>());
    c.src_chunk = j.at("src_chunk").get<Chunk>();
    c.dst_chunk = j.at("dst_chunk").get<Chunk>();
    c.ranks = j.at("ranks").get<std::vector<int>>();
    op.op = c;
  } else {
    throw ParseError("unknown op type '" + type + "'");
  }
  op.deps = j.value("deps", std::vector<OpRef>{});
}

void to_json(Json& j, const CommSchedule& s) {
  Json tensors = Json::object();
  for (const auto& [id, t] : s.tensors) tensors[id] = t;
  j = Json{{"world_size", s.world_size},
           {"tensors", tensors},
           {"plans", s.plans},
           {"owner_regions", s.owner_regions}};
}

void from_json(const Json& j, CommSchedule& s) {
  s.world_size = j.at("world_size").get<int>();
  s.tensors.clear();
  for (const auto& [id, t] : j.at("tensors").items()) {
    TensorSpec spec = t.get<TensorSpec>();
    if (!t.contains("tensor_id")) spec.id = id;
    s.tensors[id] = spec;
  }
  s.plans = j.at("plans").get<std::vector<std::vector<CommOp>>>();
  s.owner_regions = j.value("owner_regions",
                            std::vector<std::vector<Region>>{});
}

CommSchedule schedule_from_string(const std::string& text) {
  try {
    return Json::parse(text).get<CommSchedule>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed schedule: ") + e.what());
  }
}

std::string schedule_to_string(const CommSchedule& s) {
  return Json(s).dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file not found: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("cannot write " + path);
}

}  // namespace chunksched
