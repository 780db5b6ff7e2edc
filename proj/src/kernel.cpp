// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/kernel.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include "chunksched/error.hpp"

namespace chunksched {

const char* to_string(SchedulerKind kind) {
  return kind == SchedulerKind::persistent ? "persistent" : "flat";
}

const char* to_string(TileBody body) {
  return body == TileBody::gemm ? "gemm" : "checksum";
}

const Axis& TileProgram::axis(const std::string& name) const {
  for (const Axis& a : axes) {
    if (a.name == name) return a;
  }
  throw Error("unknown axis '" + name + "'");
}

int64_t TileProgram::tile_count() const {
  int64_t n = 1;
  for (const auto& name : spatial) n *= axis(name).tiles();
  return n;
}

double TileProgram::flops_per_tile() const {
  if (flops_override >= 0) return flops_override;
  double f = 2;
  for (const Axis& a : axes) {
    f *= static_cast<double>(a.spatial() ? a.block : a.extent);
  }
  return f;
}

std::vector<int64_t> TileProgram::coords(int64_t tile) const {
  std::vector<int64_t> c(spatial.size());
  for (int d = static_cast<int>(spatial.size()) - 1; d >= 0; --d) {
    const int64_t n = axis(spatial[d]).tiles();
    c[d] = tile % n;
    tile /= n;
  }
  return c;
}

int64_t TileProgram::tile_id(const std::vector<int64_t>& c) const {
  int64_t id = 0;
  for (size_t d = 0; d < spatial.size(); ++d) {
    id = id * axis(spatial[d]).tiles() + c[d];
  }
  return id;
}

namespace {

bool is_literal(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), ::isdigit);
}

}  // namespace

Region TileProgram::region(const TileAccess& access, int64_t tile) const {
  const auto c = coords(tile);
  Region r{access.tensor_id, {}, {}};
  for (const std::string& dim : access.dims) {
    if (is_literal(dim)) {
      r.offsets.push_back(0);
      r.sizes.push_back(std::stoll(dim));
      continue;
    }
    const Axis& a = axis(dim);
    if (!a.spatial()) {
      r.offsets.push_back(0);
      r.sizes.push_back(a.extent);
      continue;
    }
    const auto pos = std::find(spatial.begin(), spatial.end(), dim) -
                     spatial.begin();
    const int64_t lo = c[pos] * a.block;
    r.offsets.push_back(lo);
    r.sizes.push_back(std::min(a.block, a.extent - lo));
  }
  return r;
}

std::vector<Region> TileProgram::reads(int64_t tile) const {
  std::vector<Region> out;
  for (const auto& a : accesses) {
    if (!a.write) out.push_back(region(a, tile));
  }
  return out;
}

std::vector<Region> TileProgram::writes(int64_t tile) const {
  std::vector<Region> out;
  for (const auto& a : accesses) {
    if (a.write) out.push_back(region(a, tile));
  }
  return out;
}

std::vector<TensorSpec> TileProgram::tensors() const {
  std::map<std::string, TensorSpec> seen;
  for (const auto& a : accesses) {
    TensorSpec t{a.tensor_id, {}, a.elem_bytes, true};
    for (const auto& dim : a.dims) {
      t.shape.push_back(is_literal(dim) ? std::stoll(dim) : axis(dim).extent);
    }
    seen.emplace(a.tensor_id, t);
  }
  std::vector<TensorSpec> out;
  for (auto& [id, t] : seen) out.push_back(t);
  return out;
}

namespace {

struct Directive {
  int line = 0;
  std::string kind;
  std::vector<std::string> args;
};

[[noreturn]] void fail_at(int line, const std::string& why) {
  throw ParseError("line " + std::to_string(line) + ": " + why);
}

std::pair<std::string, std::string> split_kv(const std::string& s, int line) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    fail_at(line, "expected KEY=VALUE, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

}  // namespace

ParsedKernel parse_annotations(const std::string& source) {
  static const std::regex decl(R"(^\s*([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(\d+)\s*$)");
  static const std::regex directive(R"(^\s*#\s*@sy\.([A-Za-z_]+)\s*(.*)$)");

  ParsedKernel out;
  std::map<std::string, int64_t> decls;
  std::vector<Directive> directives;
  std::istringstream in(source);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, directive)) {
      Directive d{n, m[1], {}};
      std::istringstream args(m[2].str());
      for (std::string a; args >> a;) d.args.push_back(a);
      directives.push_back(d);
    } else if (std::regex_match(line, m, decl)) {
      decls[m[1]] = std::stoll(m[2]);
    }
  }

  if (directives.empty()) {
    out.empty = true;
    out.diagnostics.push_back("no @sy directives found");
    return out;
  }

  TileProgram& p = out.program;
  std::optional<int> dispatch_open;
  bool saw_tile_id = false;
  bool saw_pid_map = false;
  std::map<std::string, int> axis_line;
  for (const Directive& d : directives) {
    if (d.kind == "axis_count") {
      if (d.args.size() != 2) fail_at(d.line, "usage: @sy.axis_count NAME block=SYM");
      const auto [key, sym] = split_kv(d.args[1], d.line);
      if (key != "block") fail_at(d.line, "expected block=SYM");
      Axis a;
      a.name = d.args[0];
      a.block_symbol = sym;
      if (!decls.count(a.name)) {
        fail_at(d.line, "axis " + a.name + " has no extent declaration");
      }
      a.extent = decls[a.name];
      if (is_literal(sym)) {
        a.block = std::stoll(sym);
      } else if (decls.count(sym)) {
        a.block = decls[sym];
      } else {
        fail_at(d.line, "block symbol " + sym + " is not declared");
      }
      if (a.extent < 1 || a.block < 1) fail_at(d.line, "axis sizes must be positive");
      if (axis_line.count(a.name)) fail_at(d.line, "axis " + a.name + " declared twice");
      axis_line[a.name] = d.line;
      p.axes.push_back(a);
    } else if (d.kind == "tile_id") {
      if (d.args.size() != 1) fail_at(d.line, "usage: @sy.tile_id persistent|flat");
      if (d.args[0] == "persistent") {
        p.scheduler = SchedulerKind::persistent;
      } else if (d.args[0] == "flat") {
        p.scheduler = SchedulerKind::flat;
      } else {
        fail_at(d.line, "unknown tile scheduler '" + d.args[0] + "'");
      }
      saw_tile_id = true;
    } else if (d.kind == "dispatch") {
      const std::string what = d.args.empty() ? "" : d.args[0];
      if (what == "begin") {
        if (dispatch_open) fail_at(d.line, "nested dispatch region");
        dispatch_open = d.line;
      } else if (what == "end") {
        if (!dispatch_open) fail_at(d.line, "dispatch end without begin");
        dispatch_open.reset();
      } else {
        fail_at(d.line, "usage: @sy.dispatch begin|end");
      }
    } else if (d.kind == "pid_map") {
      if (!dispatch_open) fail_at(d.line, "pid_map outside a dispatch region");
      if (saw_pid_map) fail_at(d.line, "second pid_map");
      saw_pid_map = true;
      for (const auto& arg : d.args) {
        const auto [name, var] = split_kv(arg, d.line);
        auto it = std::find_if(p.axes.begin(), p.axes.end(),
                               [&](const Axis& a) { return a.name == name; });
        if (it == p.axes.end()) {
          fail_at(d.line, "pid_map names undeclared axis " + name);
        }
        it->pid_var = var;
        p.spatial.push_back(name);
      }
    } else if (d.kind == "access") {
      if (d.args.size() < 3) {
        fail_at(d.line, "usage: @sy.access TENSOR read|write DIM... [bytes=N]");
      }
      TileAccess a;
      a.tensor_id = d.args[0];
      if (d.args[1] != "read" && d.args[1] != "write") {
        fail_at(d.line, "access mode must be read or write");
      }
      a.write = d.args[1] == "write";
      for (size_t k = 2; k < d.args.size(); ++k) {
        if (d.args[k].rfind("bytes=", 0) == 0) {
          a.elem_bytes = std::stoi(d.args[k].substr(6));
        } else {
          a.dims.push_back(d.args[k]);
        }
      }
      p.accesses.push_back(a);
    } else if (d.kind == "flops_per_tile") {
      if (d.args.size() != 1) fail_at(d.line, "usage: @sy.flops_per_tile X");
      p.flops_override = std::stod(d.args[0]);
    } else if (d.kind == "body") {
      if (d.args.size() == 1 && d.args[0] == "gemm") {
        p.body = TileBody::gemm;
      } else if (d.args.size() == 1 && d.args[0] == "checksum") {
        p.body = TileBody::checksum;
      } else {
        fail_at(d.line, "usage: @sy.body gemm|checksum");
      }
    } else {
      out.diagnostics.push_back("line " + std::to_string(d.line) +
                                ": unknown directive @sy." + d.kind);
    }
  }
  if (dispatch_open) fail_at(*dispatch_open, "unclosed dispatch region");
  if (!saw_tile_id) throw ParseError("missing @sy.tile_id directive");
  if (p.spatial.empty()) throw ParseError("missing @sy.pid_map directive");
  if (decls.count("NUM_SMS")) p.sm_count = static_cast<int>(decls["NUM_SMS"]);
  for (const auto& a : p.accesses) {
    for (const auto& dim : a.dims) {
      if (!is_literal(dim) && !axis_line.count(dim)) {
        throw ParseError("access to " + a.tensor_id + " names unknown axis " +
                         dim);
      }
    }
  }
  for (const Axis& a : p.axes) {
    if (!a.spatial()) continue;
    if (a.extent % a.block != 0) {
      out.diagnostics.push_back("axis " + a.name +
                                " has a partial edge tile");
    }
  }
  return out;
}

std::string print_annotations(const TileProgram& p) {
  std::ostringstream os;
  std::map<std::string, int64_t> decls;
  for (const Axis& a : p.axes) {
    decls[a.name] = a.extent;
    if (!is_literal(a.block_symbol)) decls[a.block_symbol] = a.block;
  }
  decls["NUM_SMS"] = p.sm_count;
  for (const auto& [name, value] : decls) os << name << " = " << value << "\n";
  for (const Axis& a : p.axes) {
    os << "# @sy.axis_count " << a.name << " block=" << a.block_symbol << "\n";
  }
  os << "# @sy.tile_id " << to_string(p.scheduler) << "\n";
  os << "# @sy.dispatch begin\n# @sy.pid_map";
  for (const auto& name : p.spatial) {
    os << " " << name << "=" << p.axis(name).pid_var;
  }
  os << "\n# @sy.dispatch end\n";
  for (const auto& a : p.accesses) {
    os << "# @sy.access " << a.tensor_id << (a.write ? " write" : " read");
    for (const auto& dim : a.dims) os << " " << dim;
    os << " bytes=" << a.elem_bytes << "\n";
  }
  if (p.flops_override >= 0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", p.flops_override);
    os << "# @sy.flops_per_tile " << buf << "\n";
  }
  os << "# @sy.body " << to_string(p.body) << "\n";
  return os.str();
}

TileProgram with_tile_config(const TileProgram& p, int64_t bm, int64_t bn,
                             int64_t bk) {
  TileProgram out = p;
  const int64_t spatial_blocks[2] = {bm, bn};
  for (size_t d = 0; d < out.spatial.size() && d < 2; ++d) {
    if (spatial_blocks[d] <= 0) continue;
    for (Axis& a : out.axes) {
      if (a.name == out.spatial[d]) a.block = spatial_blocks[d];
    }
  }
  if (bk > 0) {
    for (Axis& a : out.axes) {
      if (!a.spatial()) {
        a.block = bk;
        break;
      }
    }
  }
  return out;
}

int64_t WaveSchedule::wave_count() const {
  const int64_t n = static_cast<int64_t>(order.size());
  return (n + sm_count - 1) / sm_count;
}

std::vector<std::vector<int64_t>> WaveSchedule::waves() const {
  std::vector<std::vector<int64_t>> out;
  for (size_t i = 0; i < order.size(); i += sm_count) {
    const size_t end = std::min(order.size(), i + sm_count);
    out.emplace_back(order.begin() + i, order.begin() + end);
  }
  return out;
}

WaveSchedule default_tile_order(const TileProgram& p) {
  WaveSchedule w;
  w.sm_count = p.sm_count;
  w.order.resize(p.tile_count());
  for (int64_t t = 0; t < p.tile_count(); ++t) w.order[t] = t;
  return w;
}

double sm_utilization(const TileProgram&, const WaveSchedule& order) {
  const int64_t waves = order.wave_count();
  if (waves == 0) return 1.0;
  return static_cast<double>(order.order.size()) /
         (static_cast<double>(waves) * order.sm_count);
}

void to_json(Json& j, const TileProgram& p) {
  Json axes = Json::array();
  for (const Axis& a : p.axes) {
    axes.push_back({{"name", a.name},
                    {"extent", a.extent},
                    {"block", a.block},
                    {"block_symbol", a.block_symbol},
                    {"pid_var", a.pid_var}});
  }
  Json accesses = Json::array();
  for (const auto& a : p.accesses) {
    accesses.push_back({{"tensor_id", a.tensor_id},
                        {"mode", a.write ? "write" : "read"},
                        {"dims", a.dims},
                        {"elem_bytes", a.elem_bytes}});
  }
  j = Json{{"axes", axes},
           {"spatial", p.spatial},
           {"scheduler", to_string(p.scheduler)},
           {"sm_count", p.sm_count},
           {"tile_count", p.tile_count()},
           {"accesses", accesses},
           {"flops_per_tile", p.flops_per_tile()},
           {"flops_override", p.flops_override >= 0},
           {"body", to_string(p.body)}};
}

void from_json(const Json& j, TileProgram& p) {
  p = TileProgram{};
  for (const auto& a : j.at("axes")) {
    p.axes.push_back({a.at("name"), a.at("extent"), a.at("block"),
                      a.value("block_symbol", ""), a.value("pid_var", "")});
  }
  p.spatial = j.at("spatial").get<std::vector<std::string>>();
  p.scheduler = j.value("scheduler", "persistent") == "flat"
                    ? SchedulerKind::flat
                    : SchedulerKind::persistent;
  p.sm_count = j.value("sm_count", 132);
  for (const auto& a : j.at("accesses")) {
    p.accesses.push_back({a.at("tensor_id"), a.at("mode") == "write",
                          a.at("dims").get<std::vector<std::string>>(),
                          a.value("elem_bytes", 2)});
  }
  if (j.value("flops_override", false)) {
    p.flops_override = j.at("flops_per_tile").get<double>();
  }
  p.body = j.value("body", "checksum") == "gemm" ? TileBody::gemm
                                                 : TileBody::checksum;
}

}  // namespace chunksched
