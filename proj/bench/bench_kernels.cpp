// Serial reference kernels against their OpenMP versions.
// Run with --benchmark_filter=... as usual; thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "icl/kernels.hpp"
#include "icl/theory.hpp"

namespace {

using namespace icl;

const std::vector<ContextBatch>& pool() {
  static const auto p = kernels::make_context_pool_ref(TaskClass::relu2(1.0), CovariateDist::uniform_sphere(5), 64,
                                                       8, 0.05, 512, RngStream(7));
  return p;
}

void BM_ContextPoolRef(benchmark::State& st) {
  for (auto _ : st) {
    benchmark::DoNotOptimize(kernels::make_context_pool_ref(TaskClass::relu2(1.0), CovariateDist::uniform_sphere(5),
                                                            64, 8, 0.05, 512, RngStream(7)));
  }
}
void BM_ContextPool(benchmark::State& st) {
  for (auto _ : st) {
    benchmark::DoNotOptimize(kernels::make_context_pool(TaskClass::relu2(1.0), CovariateDist::uniform_sphere(5), 64,
                                                        8, 0.05, 512, RngStream(7)));
  }
}

void BM_ContextLossesRef(benchmark::State& st) {
  const auto params = AttentionParams::direct(10.0 * Matrix::identity(5), EstimatorKind::Softmax);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::context_losses_ref(params, pool()));
}
void BM_ContextLosses(benchmark::State& st) {
  const auto params = AttentionParams::direct(10.0 * Matrix::identity(5), EstimatorKind::Softmax);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::context_losses(params, pool()));
}

void BM_SweepTableRef(benchmark::State& st) {
  const Vector grid = log_grid(1.0, 300.0, 25);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::sweep_table_ref(pool(), grid, 0.05));
}
void BM_SweepTable(benchmark::State& st) {
  const Vector grid = log_grid(1.0, 300.0, 25);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::sweep_table(pool(), grid, 0.05));
}

void BM_CapHitsRef(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(kernels::cap_hits_ref(5, 0.3, 200000, RngStream(3)));
}
void BM_CapHits(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(kernels::cap_hits(5, 0.3, 200000, RngStream(3)));
}

BENCHMARK(BM_ContextPoolRef)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ContextPool)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ContextLossesRef)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ContextLosses)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepTableRef)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepTable)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CapHitsRef)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CapHits)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
