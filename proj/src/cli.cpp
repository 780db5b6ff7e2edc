// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "chunksched/error.hpp"
#include "chunksched/fixtures.hpp"
#include "chunksched/lowering.hpp"
#include "chunksched/tune.hpp"

namespace chunksched {

namespace {

struct Options {
  std::string kernel, schedule, template_name, ir, profile, out, path = "direct";
  std::string tensor, shape;
  int world_size = 0;
  int axis = 0;
  uint64_t seed = 1;
  int split = 1;
  int split_axis = 0;
  std::string backend = "copy_engine";
  std::string reduce_backend = "ldst_colocated";
  int comm_sms = 0;
  std::string intra = "row_major";
  std::string mode = "fused";
  int device_sms = 132;
  double launch_overhead_us = 5.0;
  // simulate
  std::string program;
  int drop_wait = -1;
  bool jitter = false;
  double straggler = 1.0;
  std::string payload = "auto";
  // tune
  std::string splits = "1", split_axes = "0", backends = "copy_engine";
  std::string reduce_backends = "ldst_colocated", comm_sms_list = "0";
  std::string intra_list = "row_major", tiles;
  bool serial = false;
  // trace
  std::string trace;
};

bool verbose() {
  const char* v = std::getenv("CHUNKSCHED_VERBOSE");
  return v && *v && std::string(v) != "0";
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int to_int(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad " + what + " '" + s + "'");
  }
}

std::vector<int> int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(to_int(item, what));
  if (out.empty()) throw ParseError("empty " + what + " list");
  return out;
}

std::vector<BackendKind> backend_list(const std::string& s) {
  std::vector<BackendKind> out;
  for (const auto& item : split_list(s)) out.push_back(backend_from_string(item));
  if (out.empty()) throw ParseError("empty backend list");
  return out;
}

// "BMxBNxBK[xSTAGES]" entries.
std::vector<TileConfig> tile_list(const std::string& s) {
  std::vector<TileConfig> out;
  for (const auto& item : split_list(s)) {
    const auto parts = split_list(item, 'x');
    if (parts.size() != 3 && parts.size() != 4) {
      throw ParseError("bad tile config '" + item + "', want BMxBNxBK[xSTAGES]");
    }
    TileConfig t;
    t.bm = to_int(parts[0], "block size");
    t.bn = to_int(parts[1], "block size");
    t.bk = to_int(parts[2], "block size");
    if (parts.size() == 4) t.stages = to_int(parts[3], "stage count");
    out.push_back(t);
  }
  if (out.empty()) out.push_back(TileConfig{});
  return out;
}

std::vector<int64_t> parse_shape(const std::string& s) {
  std::vector<int64_t> out;
  for (const auto& item : split_list(s, 'x')) out.push_back(to_int(item, "shape"));
  if (out.empty()) throw ParseError("bad shape '" + s + "'");
  return out;
}

class Driver {
 public:
  Driver(const Options& o, std::ostream& out, std::ostream& err)
      : o_(o), out_(out), err_(err) {}

  std::string stage = "input";

  std::optional<ParsedKernel> kernel() {
    if (o_.kernel.empty()) return std::nullopt;
    enter("kernel");
    ParsedKernel k = parse_annotations(read_text_file(o_.kernel));
    for (const auto& d : k.diagnostics) err_ << "warning: " << o_.kernel << ": " << d << "\n";
    return k;
  }

  CommSchedule schedule(const std::optional<TileProgram>& program) {
    const int sources = !o_.schedule.empty() + !o_.template_name.empty() + !o_.ir.empty();
    if (sources > 1) throw ParseError("give only one of --schedule, --template, --ir");
    CommSchedule s;
    if (!o_.schedule.empty()) {
      enter("schedule");
      s = schedule_from_string(read_text_file(o_.schedule));
    } else if (!o_.ir.empty()) {
      enter("lower");
      s = lower_ir_document(read_json_file(o_.ir), path_from_string(o_.path));
    } else if (!o_.template_name.empty()) {
      enter("template");
      s = make_template(o_.template_name, template_params_from(program));
    } else {
      s = empty_schedule(std::max(1, o_.world_size));
    }
    if (o_.world_size > 0 && s.world_size != o_.world_size) {
      throw ParseError("schedule has world size " + std::to_string(s.world_size) +
                       ", --world-size says " + std::to_string(o_.world_size));
    }
    return s;
  }

  Workload workload() {
    Workload w;
    if (auto k = kernel()) {
      if (!k->empty) w.program = k->program;
    }
    w.schedule = schedule(w.program);
    if (o_.split != 1) {
      enter("split");
      w.schedule = split_schedule(w.schedule, o_.split, o_.split_axis);
    }
    return w;
  }

  BackendProfile profile() {
    if (o_.profile.empty()) return h100_profile();
    enter("profile");
    return load_profile(o_.profile);
  }

  RealizeOptions realize_options() const {
    RealizeOptions r;
    r.device_sms = o_.device_sms;
    r.comm_sms = o_.comm_sms;
    r.launch_overhead = o_.launch_overhead_us * 1e-6;
    if (o_.mode == "fused") {
      r.mode = OverlapMode::fused;
    } else if (o_.mode == "partitioned") {
      r.mode = OverlapMode::partitioned;
    } else {
      throw ParseError("unknown mode '" + o_.mode + "'");
    }
    return r;
  }

  SimConfig sim_config() const {
    SimConfig c;
    c.sms_per_device = o_.device_sms;
    c.launch_overhead = o_.launch_overhead_us * 1e-6;
    c.payload_seed = o_.seed;
    c.jitter.enabled = o_.jitter;
    c.jitter.seed = o_.seed;
    c.jitter.straggler = o_.straggler;
    if (o_.payload == "on") {
      c.payload = PayloadMode::on;
    } else if (o_.payload == "off") {
      c.payload = PayloadMode::off;
    } else if (o_.payload != "auto") {
      throw ParseError("unknown payload mode '" + o_.payload + "'");
    }
    return c;
  }

  DeviceProgram build_program(const Workload& w, const BackendProfile& prof) {
    enter("plan");
    const Plan plan = plan_workload(w, intra_from_string(o_.intra));
    enter("realize");
    const Assignment a = uniform_assignment(
        w.schedule, backend_from_string(o_.backend),
        backend_from_string(o_.reduce_backend));
    return realize(w, plan, a, prof, realize_options());
  }

  std::string out_path(const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path dir = o_.out.empty() ? fs::path(".") : fs::path(o_.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
    return (dir / name).string();
  }

  void note(const std::string& msg) {
    if (verbose()) err_ << "[" << stage << "] " << msg << "\n";
  }

  void enter(const std::string& name) {
    stage = name;
    note("begin");
  }

 private:
  TemplateParams template_params_from(const std::optional<TileProgram>& program) {
    if (o_.world_size < 1) throw ParseError("--template needs --world-size");
    const std::string& name = o_.template_name;
    const bool reduces = name == "reduce_scatter" || name == "partition_allreduce";
    TensorSpec t;
    std::string id = o_.tensor;
    if (program) {
      for (const TileAccess& a : program->accesses) {
        if (id.empty() && a.write == reduces) id = a.tensor_id;
      }
      for (const TensorSpec& spec : program->tensors()) {
        if (spec.id == id) t = spec;
      }
    }
    if (id.empty()) id = "X";
    if (!o_.shape.empty()) {
      t.id = id;
      t.shape = parse_shape(o_.shape);
    }
    if (t.shape.empty()) {
      throw ParseError("template tensor '" + id +
                       "' has no shape; pass --shape or a kernel using it");
    }
    return template_params(name, o_.world_size, t, o_.axis);
  }

  const Options& o_;
  std::ostream& out_;
  std::ostream& err_;
};

Json violations_json(const std::vector<Violation>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back({{"code", x.code}, {"message", x.message}});
  return a;
}

int cmd_validate(const Options& o, Driver& d, std::ostream& out) {
  std::vector<Violation> violations;
  Workload w = d.workload();
  d.enter("validate");
  const ValidationReport rep = validate_schedule(w.schedule);
  violations = rep.violations;
  if (w.program) {
    try {
      workload_tensors(w);
    } catch (const Error& e) {
      violations.push_back({"tensor_mismatch", e.what()});
    }
  }
  std::ostringstream text;
  text << "world_size " << w.schedule.world_size << ", " << w.schedule.op_count()
       << " ops";
  if (w.program) text << ", " << w.program->tile_count() << " tiles";
  text << "\n";
  for (const auto& v : violations) text << v.code << ": " << v.message << "\n";
  text << (violations.empty() ? "OK" : "INVALID") << "\n";
  out << text.str();
  if (!o.out.empty()) {
    write_text_file(d.out_path("report.txt"), text.str());
    Json j{{"valid", violations.empty()}, {"violations", violations_json(violations)}};
    write_text_file(d.out_path("report.json"), j.dump(2) + "\n");
  }
  return violations.empty() ? kExitOk : kExitValidation;
}

int cmd_lower(const Options& o, Driver& d, std::ostream& out) {
  if (o.ir.empty() && o.template_name.empty() && o.schedule.empty()) {
    throw ParseError("lower needs --ir, --template or --schedule");
  }
  Workload w = d.workload();
  const std::string text = schedule_to_string(w.schedule);
  if (o.out.empty()) {
    out << text;
  } else {
    write_text_file(d.out_path("schedule.json"), text);
    out << "wrote " << w.schedule.op_count() << " ops to "
        << d.out_path("schedule.json") << "\n";
  }
  d.enter("validate");
  const ValidationReport rep = validate_schedule(w.schedule);
  for (const auto& v : rep.violations) out << v.code << ": " << v.message << "\n";
  return rep.ok() ? kExitOk : kExitValidation;
}

Json sync_json(const SyncPlan& p) {
  Json a = Json::array();
  for (const SyncPoint& s : p.points) {
    a.push_back({{"kind", s.kind == SyncPoint::Kind::wait ? "wait" : "signal"},
                 {"stream", s.stream == SyncPoint::Stream::tiles ? "tiles" : "ops"},
                 {"rank", s.rank},
                 {"position", s.position},
                 {"signal", s.signal},
                 {"op", s.op},
                 {"tiles", s.tiles}});
  }
  return a;
}

int cmd_plan(const Options& o, Driver& d, std::ostream& out) {
  Workload w = d.workload();
  if (!w.program) throw ParseError("plan needs --kernel");
  const BackendProfile prof = d.profile();
  d.enter("plan");
  const Plan plan = plan_workload(w, intra_from_string(o.intra));
  Json ranks = Json::array();
  for (size_t r = 0; r < plan.graphs.size(); ++r) {
    Json j = swizzle_to_json(plan.swizzles[r]);
    j["rank"] = r;
    j["syncs"] = sync_json(plan.syncs[r]);
    j["diagnostics"] = plan.syncs[r].diagnostics;
    ranks.push_back(j);
    write_text_file(d.out_path("depgraph_rank" + std::to_string(r) + ".dot"),
                    depgraph_to_dot(plan.graphs[r]));
  }
  write_text_file(d.out_path("plan.json"), Json{{"ranks", ranks}}.dump(1) + "\n");
  d.enter("realize");
  const Assignment a = uniform_assignment(w.schedule, backend_from_string(o.backend),
                                          backend_from_string(o.reduce_backend));
  const DeviceProgram p = realize(w, plan, a, prof, d.realize_options());
  write_text_file(d.out_path("program.json"), program_to_json(p).dump(1) + "\n");
  out << "planned " << plan.graphs.size() << " ranks, "
      << planned_waits(p).size() << " planned waits\n";
  return kExitOk;
}

int cmd_simulate(const Options& o, Driver& d, std::ostream& out) {
  DeviceProgram prog;
  if (!o.program.empty()) {
    d.enter("program");
    prog = program_from_json(read_json_file(o.program));
  } else {
    Workload w = d.workload();
    prog = d.build_program(w, d.profile());
  }
  if (o.drop_wait >= 0) {
    d.enter("mutate");
    const auto sites = planned_waits(prog);
    if (o.drop_wait >= static_cast<int>(sites.size())) {
      throw ParseError("--drop-wait " + std::to_string(o.drop_wait) + " but only " +
                       std::to_string(sites.size()) + " planned waits");
    }
    const WaitSite& s = sites[o.drop_wait];
    out << "dropped wait " << s.signal << " on rank " << s.rank << "\n";
    prog = drop_wait(prog, s);
  }
  d.enter("simulate");
  SimConfig cfg = d.sim_config();
  const Workload& w = prog.workload;
  bool payload = cfg.payload == PayloadMode::on;
  if (cfg.payload == PayloadMode::automatic) {
    int64_t elems = 0;
    for (const auto& [id, t] : workload_tensors(w)) elems += t.elements();
    payload = elems * w.schedule.world_size <= cfg.auto_payload_limit;
  }
  cfg.payload = payload ? PayloadMode::on : PayloadMode::off;
  std::optional<Buffers> inputs;
  if (payload) inputs = make_inputs(w, cfg.payload_seed);
  const SimResult r = payload ? simulate(prog, cfg, *inputs) : simulate(prog, cfg);
  d.note("makespan " + std::to_string(r.timeline.makespan * 1e6) + " us");

  Json verdict;
  std::optional<std::string> diff;
  if (payload) {
    d.enter("oracle");
    const ReferenceResult ref = reference_execute(w, *inputs);
    diff = first_difference(*r.buffers, ref.buffers);
    verdict["oracle_equal"] = !diff.has_value();
    verdict["oracle_violations"] = violations_json(ref.violations);
  } else {
    verdict["oracle_equal"] = nullptr;
  }
  const bool pass = r.violations.empty() && !diff;
  verdict["verdict"] = pass ? "PASS" : "FAIL";
  verdict["makespan_us"] = r.timeline.makespan * 1e6;
  verdict["compute_utilization"] = r.timeline.compute_utilization;
  verdict["world_size"] = w.schedule.world_size;
  verdict["mode"] = to_string(prog.mode);
  verdict["payload"] = payload;
  verdict["violations"] = violations_json(r.violations);
  verdict["first_violation"] =
      r.violations.empty() ? Json(nullptr) : Json(r.violations[0].message);
  verdict["first_difference"] = diff ? Json(*diff) : Json(nullptr);

  d.enter("output");
  export_trace(r.timeline, d.out_path("trace.json"), d.out_path("summary.csv"));
  write_text_file(d.out_path("verdict.json"), verdict.dump(2) + "\n");
  char line[128];
  std::snprintf(line, sizeof line, "%s makespan %.3f us, %zu violations\n",
                pass ? "PASS" : "FAIL", r.timeline.makespan * 1e6,
                r.violations.size());
  out << line;
  if (!r.violations.empty()) out << "first: " << r.violations[0].message << "\n";
  if (diff) out << "oracle mismatch: " << *diff << "\n";
  return pass ? kExitOk : kExitValidation;
}

int cmd_tune(const Options& o, Driver& d, std::ostream& out, std::ostream& err) {
  Workload base = d.workload();
  const BackendProfile prof = d.profile();
  TuneSpace space;
  space.splits = int_list(o.splits, "split");
  space.split_axes = int_list(o.split_axes, "split axis");
  space.backends = backend_list(o.backends);
  space.reduce_backends = backend_list(o.reduce_backends);
  space.comm_sms = int_list(o.comm_sms_list, "comm SM count");
  space.intra.clear();
  for (const auto& s : split_list(o.intra_list)) space.intra.push_back(intra_from_string(s));
  if (space.intra.empty()) throw ParseError("empty intra list");
  space.tiles = tile_list(o.tiles);
  d.enter("tune");
  SimConfig cfg = d.sim_config();
  const TuneResult r = o.serial ? tune_serial(space, base, prof, cfg)
                                : tune(space, base, prof, cfg);
  d.enter("output");
  write_text_file(d.out_path("tune.csv"), tune_csv(r));
  write_text_file(d.out_path("sweep.csv"), sweep_csv(r));
  if (r.best < 0) {
    err << "no feasible configuration among " << r.rows.size()
        << " candidates\n" << prune_summary(r);
    return kExitNoFeasible;
  }
  Json best = config_to_json(r.rows[r.best].config);
  best["makespan_us"] = r.best_makespan * 1e6;
  write_text_file(d.out_path("best.json"), best.dump(2) + "\n");
  char line[160];
  std::snprintf(line, sizeof line, "%zu candidates, best makespan %.3f us\n",
                r.rows.size(), r.best_makespan * 1e6);
  out << line << "best " << best.dump() << "\n";
  return kExitOk;
}

int cmd_trace(const Options& o, Driver& d, std::ostream& out) {
  if (o.trace.empty()) throw ParseError("trace needs --trace FILE");
  const Timeline t = timeline_from_trace(parse_trace_json(read_text_file(o.trace)));
  d.enter("output");
  export_trace(t, d.out_path("trace.json"), d.out_path("summary.csv"));
  out << t.events.size() << " events, makespan "
      << t.makespan * 1e6 << " us\n";
  return kExitOk;
}

void add_inputs(CLI::App* c, Options& o) {
  c->add_option("--kernel", o.kernel, "annotated kernel source");
  c->add_option("--schedule", o.schedule, "chunk schedule JSON");
  c->add_option("--template", o.template_name, "template name");
  c->add_option("--ir", o.ir, "partition or loop IR JSON");
  c->add_option("--path", o.path, "lowering path: direct, template, synth");
  c->add_option("--tensor", o.tensor, "template tensor id");
  c->add_option("--shape", o.shape, "template tensor shape, e.g. 1024x256");
  c->add_option("--axis", o.axis, "template sharding axis");
  c->add_option("--world-size", o.world_size, "number of ranks");
  c->add_option("--split", o.split, "split factor applied to every transfer");
  c->add_option("--split-axis", o.split_axis, "tensor axis to split along");
  c->add_option("--out", o.out, "output directory");
  c->add_option("--seed", o.seed, "payload and jitter seed");
}

void add_backend(CLI::App* c, Options& o) {
  c->add_option("--profile", o.profile, "backend profile JSON");
  c->add_option("--backend", o.backend, "backend for plain transfers");
  c->add_option("--reduce-backend", o.reduce_backend, "backend for reducing transfers");
  c->add_option("--comm-sms", o.comm_sms, "SMs reserved for specialized backends");
  c->add_option("--intra", o.intra, "intra-chunk tile order");
  c->add_option("--mode", o.mode, "fused or partitioned");
  c->add_option("--device-sms", o.device_sms, "SMs per device");
  c->add_option("--launch-us", o.launch_overhead_us, "kernel launch overhead");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  Options o;
  CLI::App app("chunk-level compute/communication co-scheduler", "chunksched");
  app.require_subcommand(1);
  auto* validate = app.add_subcommand("validate", "check a schedule and kernel");
  add_inputs(validate, o);
  auto* lower = app.add_subcommand("lower", "lower IR or a template to a schedule");
  add_inputs(lower, o);
  auto* plan = app.add_subcommand("plan", "swizzle, dependence graph and waits");
  add_inputs(plan, o);
  add_backend(plan, o);
  auto* simulate = app.add_subcommand("simulate", "simulate and compare to the oracle");
  add_inputs(simulate, o);
  add_backend(simulate, o);
  simulate->add_option("--program", o.program, "realized program JSON");
  simulate->add_option("--drop-wait", o.drop_wait, "remove the K-th planned wait");
  simulate->add_flag("--jitter", o.jitter, "randomize tile and launch times");
  simulate->add_option("--straggler", o.straggler, "slowdown of one random rank");
  simulate->add_option("--payload", o.payload, "auto, on or off");
  auto* tune_cmd = app.add_subcommand("tune", "search the tuning space");
  add_inputs(tune_cmd, o);
  tune_cmd->add_option("--profile", o.profile, "backend profile JSON");
  tune_cmd->add_option("--device-sms", o.device_sms, "SMs per device");
  tune_cmd->add_option("--launch-us", o.launch_overhead_us, "kernel launch overhead");
  tune_cmd->add_option("--splits", o.splits, "split factors, comma separated");
  tune_cmd->add_option("--split-axes", o.split_axes, "split axes");
  tune_cmd->add_option("--backends", o.backends, "plain-transfer backends");
  tune_cmd->add_option("--reduce-backends", o.reduce_backends, "reducing backends");
  tune_cmd->add_option("--comm-sms", o.comm_sms_list, "comm SM counts");
  tune_cmd->add_option("--intra", o.intra_list, "intra-chunk orders");
  tune_cmd->add_option("--tiles", o.tiles, "BMxBNxBK[xSTAGES] list");
  tune_cmd->add_flag("--serial", o.serial, "evaluate without threads");
  auto* trace = app.add_subcommand("trace", "re-export a trace");
  trace->add_option("--trace", o.trace, "trace JSON from simulate");
  trace->add_option("--out", o.out, "output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  Driver d(o, out, err);
  try {
    if (validate->parsed()) return cmd_validate(o, d, out);
    if (lower->parsed()) return cmd_lower(o, d, out);
    if (plan->parsed()) return cmd_plan(o, d, out);
    if (simulate->parsed()) return cmd_simulate(o, d, out);
    if (tune_cmd->parsed()) return cmd_tune(o, d, out, err);
    if (trace->parsed()) return cmd_trace(o, d, out);
  } catch (const UnimplementedError& e) {
    err << "[" << d.stage << "] " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "[" << d.stage << "] " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    err << "[" << d.stage << "] " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "[" << d.stage << "] " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    err << "[" << d.stage << "] " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace chunksched
