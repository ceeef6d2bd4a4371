// Serial reference loop vs the OpenMP episode loop, plus the per-step kernel.

#include <benchmark/benchmark.h>

#include "tpvae/harness.hpp"

namespace {

using namespace tpvae;

const EmbeddingDataset& dataset() {
  static const EmbeddingDataset ds = gen_synthetic({20, 16, 100, 3.0, 1});
  return ds;
}

SolverConfig bench_config() {
  SolverConfig cfg;
  cfg.max_iters = 50;
  return cfg;
}

void BM_EvaluateSerial(benchmark::State& state) {
  HarnessOptions opts;
  opts.execution = Execution::serial;
  const EpisodeSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate(dataset(), spec, bench_config(), state.range(0), 0, opts).mean);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EvaluateParallel(benchmark::State& state) {
  HarnessOptions opts;
  opts.execution = Execution::parallel;
  opts.workers = static_cast<int>(state.range(1));
  const EpisodeSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate(dataset(), spec, bench_config(), state.range(0), 0, opts).mean);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LossAndGrad(benchmark::State& state) {
  const EpisodeSpec spec;
  RngStream rng(0, 0);
  const Episode ep = sample_episode(dataset(), spec, rng);
  const TPVAEState st = init_state(ep, SolverConfig{}, rng);
  const auto latents = sample_latents(ep, 0.1, 1, rng);
  Gradients g;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_grad(st, ep, LossWeights::full(), latents, &g).total);
  }
}

}  // namespace

BENCHMARK(BM_EvaluateSerial)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateParallel)->Args({32, 1})->Args({32, 2})->Args({32, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossAndGrad)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
