// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

#include "chunksched/error.hpp"
#include "chunksched/sim.hpp"

namespace chunksched {

namespace {

// Picosecond grid, so a parsed trace re-exports byte for byte.
double to_us(double seconds) { return std::round(seconds * 1e12) / 1e6; }

}  // namespace

std::vector<TraceEvent> trace_events(const Timeline& t) {
  std::vector<TraceEvent> out;
  out.reserve(t.events.size());
  for (const TimelineEvent& e : t.events) {
    out.push_back({e.label, to_us(e.start), to_us(e.end) - to_us(e.start), e.rank,
                   e.resource});
  }
  return out;
}

std::string trace_json(const Timeline& t) {
  std::map<std::pair<int, std::string>, int> tids;
  for (const TimelineEvent& e : t.events) tids.emplace(std::make_pair(e.rank, e.resource), 0);
  {
    std::map<int, int> next;
    for (auto& [key, tid] : tids) tid = next[key.first]++;
  }
  Json events = Json::array();
  for (const auto& [key, tid] : tids) {
    events.push_back({{"name", "thread_name"},
                      {"ph", "M"},
                      {"pid", key.first},
                      {"tid", tid},
                      {"args", {{"name", key.second}}}});
  }
  for (const TraceEvent& e : trace_events(t)) {
    events.push_back({{"name", e.name},
                      {"ph", "X"},
                      {"ts", e.ts},
                      {"dur", e.dur},
                      {"pid", e.pid},
                      {"tid", tids.at({e.pid, e.tid})}});
  }
  Json doc{{"traceEvents", events}, {"displayTimeUnit", "ns"}};
  return doc.dump(1) + "\n";
}

std::vector<TraceEvent> parse_trace_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
    std::map<std::pair<int, int>, std::string> names;
    for (const Json& e : doc.at("traceEvents")) {
      if (e.at("ph") == "M" && e.at("name") == "thread_name") {
        names[{e.at("pid").get<int>(), e.at("tid").get<int>()}] =
            e.at("args").at("name").get<std::string>();
      }
    }
    std::vector<TraceEvent> out;
    for (const Json& e : doc.at("traceEvents")) {
      if (e.at("ph") != "X") continue;
      const int pid = e.at("pid").get<int>();
      const int tid = e.at("tid").get<int>();
      auto it = names.find({pid, tid});
      out.push_back({e.at("name").get<std::string>(), e.at("ts").get<double>(),
                     e.at("dur").get<double>(), pid,
                     it == names.end() ? std::to_string(tid) : it->second});
    }
    return out;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad trace: ") + e.what());
  }
}

Timeline timeline_from_trace(const std::vector<TraceEvent>& events) {
  Timeline t;
  for (const TraceEvent& e : events) {
    t.events.push_back({e.pid, e.tid, e.ts * 1e-6, (e.ts + e.dur) * 1e-6,
                        e.name, {}});
    t.makespan = std::max(t.makespan, t.events.back().end);
  }
  std::map<std::string, double> busy;
  for (const auto& e : t.events) {
    busy[std::to_string(e.rank) + "/" + e.resource] += e.end - e.start;
  }
  if (t.makespan > 0) {
    for (const auto& [k, b] : busy) t.utilization[k] = b / t.makespan;
  }
  return t;
}

std::string trace_csv(const Timeline& t) {
  std::map<std::pair<int, std::string>, double> busy_us;
  for (const TimelineEvent& e : t.events) {
    busy_us[{e.rank, e.resource}] += to_us(e.end) - to_us(e.start);
  }
  const double span_us = to_us(t.makespan);
  std::ostringstream os;
  os << "rank,resource,busy_us,idle_us,utilization\n";
  char line[256];
  for (const auto& [key, b] : busy_us) {
    const double util = span_us > 0 ? b / span_us : 0;
    std::snprintf(line, sizeof line, "%d,%s,%.6f,%.6f,%.6f\n", key.first,
                  key.second.c_str(), b, span_us - b, util);
    os << line;
  }
  return os.str();
}

void export_trace(const Timeline& t, const std::string& json_path,
                  const std::string& csv_path) {
  write_text_file(json_path, trace_json(t));
  write_text_file(csv_path, trace_csv(t));
}

std::vector<std::string> check_timeline(const Timeline& t) {
  std::vector<std::string> problems;
  std::map<std::pair<int, std::string>, std::vector<const TimelineEvent*>> lanes;
  for (const TimelineEvent& e : t.events) {
    lanes[{e.rank, e.resource}].push_back(&e);
    if (e.end < e.start) problems.push_back("negative duration: " + e.label);
    for (const std::string& s : e.waited) {
      auto it = t.signal_times.find(s);
      if (it == t.signal_times.end() || it->second > e.start) {
        problems.push_back(e.label + " on rank " + std::to_string(e.rank) +
                           " started before signal " + s);
      }
    }
  }
  for (auto& [key, ev] : lanes) {
    std::sort(ev.begin(), ev.end(), [](const auto* a, const auto* b) {
      return a->start < b->start;
    });
    for (size_t k = 1; k < ev.size(); ++k) {
      if (ev[k]->start < ev[k - 1]->end) {
        problems.push_back("overlap on rank " + std::to_string(key.first) +
                           " " + key.second + ": " + ev[k - 1]->label +
                           " and " + ev[k]->label);
      }
    }
  }
  return problems;
}

}  // namespace chunksched
