// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/lowering.hpp"

#include <algorithm>
#include <regex>

#include "chunksched/error.hpp"
#include "chunksched/templates.hpp"

namespace chunksched {

LoweringPath path_from_string(const std::string& name) {
  if (name == "direct") return LoweringPath::direct;
  if (name == "template") return LoweringPath::template_;
  if (name == "synth") return LoweringPath::synth;
  throw ParseError("unknown lowering path '" + name + "'");
}

const char* to_string(LoweringPath path) {
  switch (path) {
    case LoweringPath::direct: return "direct";
    case LoweringPath::template_: return "template";
    case LoweringPath::synth: return "synth";
  }
  return "?";
}

Placement parse_placement(const std::string& text,
                          const std::vector<std::string>& axis_names) {
  if (text == "replicated") return {Placement::Kind::replicated, -1};
  if (text == "partial") return {Placement::Kind::partial, -1};
  static const std::regex sharded(R"(sharded\(\s*([A-Za-z_0-9]+)\s*\))");
  std::smatch m;
  if (std::regex_match(text, m, sharded)) {
    const std::string arg = m[1];
    if (std::all_of(arg.begin(), arg.end(), ::isdigit)) {
      return {Placement::Kind::sharded, std::stoi(arg)};
    }
    auto it = std::find(axis_names.begin(), axis_names.end(), arg);
    if (it == axis_names.end()) {
      throw ParseError("placement '" + text + "' names unknown axis '" + arg +
                       "'");
    }
    return {Placement::Kind::sharded,
            static_cast<int>(it - axis_names.begin())};
  }
  throw ParseError("unknown placement '" + text + "'");
}

std::vector<Step> parse_partition_to_steps(const TensorSpec& tensor,
                                           const Placement& produced,
                                           const Placement& consumed) {
  using K = Placement::Kind;
  const int dims = static_cast<int>(tensor.shape.size());
  for (const Placement* p : {&produced, &consumed}) {
    if (p->kind == K::sharded && (p->axis < 0 || p->axis >= dims)) {
      throw Error("placement of " + tensor.id + " shards missing axis " +
                  std::to_string(p->axis));
    }
  }
  Step step;
  step.kind = StepKind::collective;
  step.tensor_id = tensor.id;
  step.region = full_region(tensor);
  if (produced == consumed) return {};
  if (produced.kind == K::replicated && consumed.kind == K::sharded) {
    return {};  // each rank slices its local copy
  }
  if (produced.kind == K::sharded && consumed.kind == K::replicated) {
    step.collective = CollectiveType::allgather;
    step.axis = produced.axis;
  } else if (produced.kind == K::partial && consumed.kind == K::replicated) {
    step.collective = CollectiveType::allreduce;
    step.axis = 0;
  } else if (produced.kind == K::partial && consumed.kind == K::sharded) {
    step.collective = CollectiveType::reduce_scatter;
    step.axis = consumed.axis;
  } else if (produced.kind == K::sharded && consumed.kind == K::sharded) {
    step.collective = CollectiveType::all_to_all;
    step.axis = produced.axis;
    step.dst_axis = consumed.axis;
  } else {
    throw Error("no lowering rule for " + tensor.id);
  }
  return {step};
}

namespace {

CommSchedule direct_collective(const Step& step, int W, const TensorSpec& t) {
  TemplateParams p{W, t, step.axis, std::nullopt, 1, step.region,
                   RemainderRule::strict};
  check_params(p);
  CommSchedule s = empty_schedule(W);
  s.tensors[t.id] = t;
  const Chunk whole{step.region, Layout::row_major, t.id};
  std::vector<int> ranks(W);
  for (int r = 0; r < W; ++r) ranks[r] = r;
  for (int r = 0; r < W; ++r) {
    Collective c;
    c.collective_type = step.collective;
    c.ranks = ranks;
    switch (step.collective) {
      case CollectiveType::allgather:
        c.src_chunk = template_shard(p, r);
        c.dst_chunk = whole;
        s.owner_regions[r].push_back(c.src_chunk.region);
        break;
      case CollectiveType::reduce_scatter:
        c.src_chunk = whole;
        c.dst_chunk = template_shard(p, r);
        s.owner_regions[r].push_back(whole.region);
        break;
      case CollectiveType::allreduce:
        c.src_chunk = whole;
        c.dst_chunk = whole;
        s.owner_regions[r].push_back(whole.region);
        break;
      case CollectiveType::all_to_all: {
        TemplateParams q = p;
        q.axis = step.dst_axis;
        check_params(q);
        c.src_chunk = template_shard(p, r);
        c.dst_chunk = template_shard(q, r);
        s.owner_regions[r].push_back(c.src_chunk.region);
        break;
      }
    }
    s.plans[r].push_back(CommOp{c, {}});
  }
  return s;
}

CommSchedule template_collective(const Step& step, int W,
                                 const TensorSpec& t) {
  TemplateParams p{W, t, step.axis, std::nullopt, 1, step.region,
                   RemainderRule::strict};
  switch (step.collective) {
    case CollectiveType::allgather: return allgather_1d_swizzle(p);
    case CollectiveType::reduce_scatter: return reduce_scatter(p);
    case CollectiveType::allreduce: return partition_allreduce(p);
    case CollectiveType::all_to_all: return all_to_all(p, step.dst_axis);
  }
  throw Error("unknown collective");
}

}  // namespace

CommSchedule emit_steps(const std::vector<Step>& steps, int world_size,
                        const std::map<std::string, TensorSpec>& tensors,
                        LoweringPath path) {
  if (path == LoweringPath::synth) {
    throw UnimplementedError("lowering path 'synth' is unimplemented");
  }
  CommSchedule out = empty_schedule(world_size);
  out.tensors = tensors;
  std::vector<OpRef> where(steps.size(), OpRef{-1, -1});
  for (size_t k = 0; k < steps.size(); ++k) {
    const Step& step = steps[k];
    auto tensor = tensors.find(step.tensor_id);
    if (tensor == tensors.end()) {
      throw Error("step references unknown tensor '" + step.tensor_id + "'");
    }
    if (step.kind == StepKind::collective) {
      out = concat_schedules(
          out, path == LoweringPath::direct
                   ? direct_collective(step, world_size, tensor->second)
                   : template_collective(step, world_size, tensor->second));
      continue;
    }
    if (step.rank < 0 || step.rank >= world_size) {
      throw Error("step issued by invalid rank " + std::to_string(step.rank));
    }
    P2P p;
    p.direction = step.kind == StepKind::pull ? Direction::pull
                                              : Direction::push;
    p.peer = step.kind == StepKind::local_copy ? step.rank : step.peer;
    p.src_chunk = Chunk{step.region, Layout::row_major, ""};
    p.dst_chunk = Chunk{step.dst_region, Layout::row_major, ""};
    p.accumulate = step.accumulate;
    where[k] = {step.rank, static_cast<int>(out.plans[step.rank].size())};
    out.plans[step.rank].push_back(CommOp{p, {}});
  }
  for (size_t k = 0; k < steps.size(); ++k) {
    if (where[k].rank < 0) continue;
    auto& deps = out.plans[where[k].rank][where[k].index].deps;
    for (int d : steps[k].deps) {
      if (d < 0 || d >= static_cast<int>(steps.size()) || where[d].rank < 0) {
        throw Error("step dependency " + std::to_string(d) +
                    " does not name a P2P step");
      }
      deps.push_back(where[d]);
    }
  }
  return out;
}

PartitionIR partition_ir_from_json(const Json& j) {
  PartitionIR ir;
  try {
    ir.world_size = j.at("world_size").get<int>();
    for (const auto& t : j.at("tensors")) {
      TensorSpec spec = t.get<TensorSpec>();
      ir.tensors[spec.id] = spec;
    }
    if (j.contains("axis_info")) {
      ir.axis_info =
          j["axis_info"].get<std::map<std::string, std::vector<std::string>>>();
    }
    if (j.contains("mesh") && j["mesh"].size() != 1) {
      throw Error("only one-dimensional meshes are supported");
    }
    for (const auto& [id, desc] : j.at("placement").items()) {
      if (!ir.tensors.count(id)) {
        throw Error("placement names unknown tensor '" + id + "'");
      }
      const auto names = ir.axis_info.count(id) ? ir.axis_info.at(id)
                                                : std::vector<std::string>{};
      ir.placements.push_back(
          {id, parse_placement(desc.at("produced").get<std::string>(), names),
           parse_placement(desc.at("consumed").get<std::string>(), names)});
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed partition IR: ") + e.what());
  }
  return ir;
}

CommSchedule lower_partition_ir(const PartitionIR& ir, LoweringPath path) {
  std::vector<Step> steps;
  for (const auto& entry : ir.placements) {
    auto more = parse_partition_to_steps(ir.tensors.at(entry.tensor_id),
                                         entry.produced, entry.consumed);
    steps.insert(steps.end(), more.begin(), more.end());
  }
  return emit_steps(steps, ir.world_size, ir.tensors, path);
}

namespace {

Expr expr_from_json(const Json& j) {
  if (j.is_number_integer()) return Expr::constant(j.get<int64_t>());
  if (j.is_string()) return Expr::parse(j.get<std::string>());
  throw ParseError("expected an integer or expression string, got " + j.dump());
}

std::vector<Expr> exprs_from_json(const Json& j) {
  std::vector<Expr> out;
  for (const auto& e : j) out.push_back(expr_from_json(e));
  return out;
}

LoopNode node_from_json(const Json& j) {
  LoopNode n;
  if (j.contains("for")) {
    n.var = j["for"].get<std::string>();
    n.lo = expr_from_json(j.at("lo"));
    n.hi = expr_from_json(j.at("hi"));
    for (const auto& child : j.at("body")) n.body.push_back(node_from_json(child));
    return n;
  }
  CommIntent intent;
  const std::string kind = j.at("intent").get<std::string>();
  if (kind == "fetch") {
    intent.kind = IntentKind::fetch;
  } else if (kind == "flush") {
    intent.kind = IntentKind::flush;
  } else if (kind == "reduce") {
    intent.kind = IntentKind::reduce;
  } else {
    throw ParseError("unknown intent kind '" + kind + "'");
  }
  intent.tensor_id = j.at("tensor").get<std::string>();
  intent.offsets = exprs_from_json(j.at("offsets"));
  intent.sizes = exprs_from_json(j.at("sizes"));
  intent.peer = expr_from_json(j.at("peer"));
  intent.carried = j.value("carried", false);
  n.intent = intent;
  return n;
}

struct Walker {
  const LoopIR& ir;
  std::vector<Step> steps;
  // (intent address, iteration vector) -> step indices over all ranks.
  std::map<std::pair<const CommIntent*, std::vector<int64_t>>, std::vector<int>>
      index;

  void check_static(const Expr& e, const std::set<std::string>& loop_vars) {
    for (const auto& sym : e.symbols()) {
      if (sym == "r" || sym == "W" || ir.params.count(sym)) continue;
      if (loop_vars.count(sym)) {
        throw Error("dynamic loop bound '" + e.text() +
                    "' depends on loop variable " + sym);
      }
      throw Error("dynamic loop bound '" + e.text() + "' uses unknown symbol " +
                  sym);
    }
  }

  void walk(const std::vector<LoopNode>& nodes,
            std::map<std::string, int64_t>& env,
            std::set<std::string>& loop_vars, std::vector<int64_t>& iters,
            int rank) {
    for (const LoopNode& node : nodes) {
      if (!node.intent) {
        check_static(node.lo, loop_vars);
        check_static(node.hi, loop_vars);
        const int64_t lo = node.lo.eval(env);
        const int64_t hi = node.hi.eval(env);
        loop_vars.insert(node.var);
        for (int64_t v = lo; v < hi; ++v) {
          env[node.var] = v;
          iters.push_back(v);
          walk(node.body, env, loop_vars, iters, rank);
          iters.pop_back();
        }
        loop_vars.erase(node.var);
        env.erase(node.var);
        continue;
      }
      emit(*node.intent, env, loop_vars, iters, rank);
    }
  }

  void emit(const CommIntent& intent, const std::map<std::string, int64_t>& env,
            const std::set<std::string>& loop_vars,
            const std::vector<int64_t>& iters, int rank) {
    Region region{intent.tensor_id, {}, {}};
    for (const Expr& e : intent.offsets) {
      e.degree(loop_vars);
      region.offsets.push_back(e.eval(env));
    }
    for (const Expr& e : intent.sizes) {
      e.degree(loop_vars);
      region.sizes.push_back(e.eval(env));
    }
    intent.peer.degree(loop_vars);
    const int64_t peer = intent.peer.eval(env);
    if (peer < 0 || peer >= ir.world_size) {
      throw Error("intent peer '" + intent.peer.text() + "' evaluates to " +
                  std::to_string(peer));
    }
    Step step;
    step.tensor_id = intent.tensor_id;
    step.rank = rank;
    step.peer = static_cast<int>(peer);
    step.region = region;
    step.dst_region = region;
    step.kind = intent.kind == IntentKind::fetch ? StepKind::pull
                                                 : StepKind::push;
    step.accumulate = intent.kind == IntentKind::reduce;
    index[{&intent, iters}].push_back(static_cast<int>(steps.size()));
    steps.push_back(step);
    carried.push_back(intent.carried ? &intent : nullptr);
    iteration.push_back(iters);
  }

  std::vector<const CommIntent*> carried;
  std::vector<std::vector<int64_t>> iteration;

  static Access read_of(const Step& s) {
    return {s.kind == StepKind::pull ? s.peer : s.rank, s.region,
            AccessKind::read};
  }
  static Access write_of(const Step& s) {
    return {s.kind == StepKind::pull ? s.rank : s.peer, s.dst_region,
            AccessKind::write};
  }

  // Loop-carried intents depend on whichever instance of the previous
  // iteration wrote the data they read.
  void link() {
    for (size_t k = 0; k < steps.size(); ++k) {
      if (!carried[k] || iteration[k].empty()) continue;
      std::vector<int64_t> prev = iteration[k];
      --prev.back();
      auto it = index.find({carried[k], prev});
      if (it == index.end()) continue;
      const Access read = read_of(steps[k]);
      for (int cand : it->second) {
        const Access w = write_of(steps[cand]);
        if (w.rank == read.rank && overlaps(w.region, read.region)) {
          steps[k].deps.push_back(cand);
        }
      }
    }
  }
};

}  // namespace

LoopIR loop_ir_from_json(const Json& j) {
  LoopIR ir;
  try {
    ir.world_size = j.at("world_size").get<int>();
    if (j.contains("params")) {
      ir.params = j["params"].get<std::map<std::string, int64_t>>();
    }
    for (const auto& t : j.at("tensors")) {
      TensorSpec spec = t.get<TensorSpec>();
      ir.tensors[spec.id] = spec;
    }
    if (j.contains("owner")) {
      for (const auto& o : j["owner"]) {
        ir.owners.push_back({o.at("tensor").get<std::string>(),
                             exprs_from_json(o.at("offsets")),
                             exprs_from_json(o.at("sizes"))});
      }
    }
    for (const auto& n : j.at("body")) ir.body.push_back(node_from_json(n));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed loop IR: ") + e.what());
  }
  return ir;
}

CommSchedule lower_loop_ir(const LoopIR& ir, LoweringPath path) {
  if (path == LoweringPath::synth) {
    throw UnimplementedError("lowering path 'synth' is unimplemented");
  }
  Walker walker{ir, {}, {}, {}, {}};
  for (int r = 0; r < ir.world_size; ++r) {
    std::map<std::string, int64_t> env = ir.params;
    env["r"] = r;
    env["W"] = ir.world_size;
    std::set<std::string> loop_vars;
    std::vector<int64_t> iters;
    walker.walk(ir.body, env, loop_vars, iters, r);
  }
  walker.link();
  CommSchedule s = emit_steps(walker.steps, ir.world_size, ir.tensors, path);
  for (int r = 0; r < ir.world_size; ++r) {
    std::map<std::string, int64_t> env = ir.params;
    env["r"] = r;
    env["W"] = ir.world_size;
    for (const auto& o : ir.owners) {
      Region region{o.tensor_id, {}, {}};
      for (const Expr& e : o.offsets) region.offsets.push_back(e.eval(env));
      for (const Expr& e : o.sizes) region.sizes.push_back(e.eval(env));
      s.owner_regions[r].push_back(region);
    }
  }
  return s;
}

CommSchedule lower_ir_document(const Json& j, LoweringPath path) {
  if (j.contains("placement")) {
    return lower_partition_ir(partition_ir_from_json(j), path);
  }
  if (j.contains("body")) return lower_loop_ir(loop_ir_from_json(j), path);
  throw ParseError("IR document has neither 'placement' nor 'body'");
}

}  // namespace chunksched
