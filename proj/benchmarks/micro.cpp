#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "edgellm/backends.hpp"
#include "edgellm/metrics.hpp"
#include "edgellm/prometheus.hpp"

using namespace edgellm;

static void BM_Aggregate(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(0.1, 500.0);
  std::vector<double> values(static_cast<std::size_t>(state.range(0)));
  for (double& v : values) v = dist(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(aggregate(values));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Aggregate)->Arg(64)->Arg(4096)->Arg(1 << 16);

static void BM_RenderPrometheus(benchmark::State& state) {
  const char* names[] = {"edgellm_cpu_total_fraction", "edgellm_cpu_core_fraction", "edgellm_rss_bytes",
                         "edgellm_prefill_tokens_per_second", "edgellm_decode_tokens_per_second"};
  std::vector<MetricSample> snapshot;
  for (int m = 0; m < state.range(0); ++m) {
    for (const char* n : names) {
      snapshot.push_back({n, {{"model", "model-" + std::to_string(m)}, {"backend_kind", "sim"}}, 0.25 * m});
    }
    snapshot.push_back({"edgellm_requests_total", {{"model", "model-" + std::to_string(m)}, {"backend_kind", "sim"}},
                        static_cast<double>(m), MetricType::Counter});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_prometheus(snapshot));
  }
}
BENCHMARK(BM_RenderPrometheus)->Arg(8)->Arg(64);

static void BM_SimulatedCompletion(benchmark::State& state) {
  SimConfig cfg;
  cfg.prefill_ms_per_token = 82.02;
  cfg.decode_ms_per_token = 238.93;
  cfg.jitter_sigma_ms = 5.0;
  cfg.seed = 3;
  SimulatedBackend backend(cfg);
  std::string prompt(400, 'x');
  for (std::size_t i = 5; i < prompt.size(); i += 6) prompt[i] = ' ';
  for (auto _ : state) {
    benchmark::DoNotOptimize(backend.complete(prompt, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_SimulatedCompletion)->Arg(16)->Arg(500);

BENCHMARK_MAIN();
