// Compares the OpenMP-backed parallel_for against the single-threaded
// reference executor across scheduling policies.
#include <benchmark/benchmark.h>

#include <cmath>

#include "loopsched/runtime.hpp"

namespace {

// a few hundred ns of floating-point work per index
double task(std::int64_t i) {
  double acc = static_cast<double>(i % 97) * 1e-3;
  for (int k = 0; k < 32; ++k) acc = std::fma(acc, 0.99993, 1e-5);
  return acc;
}

void bm_serial(benchmark::State& state, const char* schedule) {
  auto spec = loopsched::PolicySpec::parse(schedule);
  auto n = static_cast<std::int64_t>(state.range(0));
  int p = loopsched::resolve_workers_from_env();
  double sink = 0.0;
  for (auto _ : state) {
    loopsched::serial_for(
        n, [&](std::int64_t i) { sink += task(i); }, spec, p);
    benchmark::DoNotOptimize(sink);
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void bm_parallel(benchmark::State& state, const char* schedule) {
  auto spec = loopsched::PolicySpec::parse(schedule);
  auto n = static_cast<std::int64_t>(state.range(0));
  for (auto _ : state) {
    loopsched::parallel_for(
        "bench", n,
        [](std::int64_t i) {
          double v = task(i);
          benchmark::DoNotOptimize(v);
        },
        spec);
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK_CAPTURE(bm_serial, static, "static")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_parallel, static, "static")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_serial, guided, "guided")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_parallel, guided, "guided")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_serial, fac2, "fac2")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_parallel, fac2, "fac2")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_serial, fss1, "fss:1")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_parallel, fss1, "fss:1")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_serial, ss, "ss")->Arg(1 << 16)->UseRealTime();
BENCHMARK_CAPTURE(bm_parallel, ss, "ss")->Arg(1 << 16)->UseRealTime();

BENCHMARK_MAIN();
