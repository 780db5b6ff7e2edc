// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

// OpenMP sweep against its serial twin on the same space.

#include <benchmark/benchmark.h>

#include "chunksched/fixtures.hpp"
#include "chunksched/tune.hpp"

namespace chunksched {
namespace {

Workload bench_workload() {
  GemmShape g;
  g.m = 2048, g.n = 1024, g.k = 512;
  return gemm_ar(4, g);
}

TuneSpace bench_space() {
  TuneSpace s;
  s.splits = {1, 2, 4};
  s.backends = {BackendKind::copy_engine, BackendKind::ldst_specialized};
  s.reduce_backends = {BackendKind::ldst_specialized};
  s.comm_sms = {8, 16};
  return s;
}

void BM_TuneParallel(benchmark::State& state) {
  const Workload w = bench_workload();
  const TuneSpace s = bench_space();
  for (auto _ : state) {
    benchmark::DoNotOptimize(tune(s, w, h100_profile(), SimConfig{}));
  }
}
BENCHMARK(BM_TuneParallel)->Unit(benchmark::kMillisecond);

void BM_TuneSerial(benchmark::State& state) {
  const Workload w = bench_workload();
  const TuneSpace s = bench_space();
  for (auto _ : state) {
    benchmark::DoNotOptimize(tune_serial(s, w, h100_profile(), SimConfig{}));
  }
}
BENCHMARK(BM_TuneSerial)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace chunksched

BENCHMARK_MAIN();
