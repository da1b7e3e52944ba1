#include "icl/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <optional>

#include "kernel_items.hpp"
#include "loop_errors.hpp"

namespace icl::kernels {

void set_num_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, threads));
#else
  (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::vector<ContextBatch> make_context_pool(const TaskClass& task_class, const CovariateDist& dist, std::size_t n,
                                            std::size_t m, double sigma, std::size_t count, const RngStream& rng) {
  std::vector<std::optional<ContextBatch>> slots(count);
  const auto total = static_cast<std::ptrdiff_t>(count);
  icl::detail::LoopErrors errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < total; ++c) {
    errors.run(c, [&] {
      slots[c] = detail::make_pool_item(task_class, dist, n, m, sigma, rng, static_cast<std::size_t>(c));
    });
  }
  errors.rethrow();
  std::vector<ContextBatch> pool;
  pool.reserve(count);
  for (auto& slot : slots) pool.push_back(std::move(*slot));
  return pool;
}

Vector context_losses(const AttentionParams& params, std::span<const ContextBatch> pool) {
  Vector out(pool.size());
  const auto total = static_cast<std::ptrdiff_t>(pool.size());
  icl::detail::LoopErrors errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < total; ++c) {
    errors.run(c, [&] { out[c] = context_sq_loss(params, pool[c]); });
  }
  errors.rethrow();
  return out;
}

std::vector<ContextDecomposition> context_decompositions(const Matrix& m, std::span<const ContextBatch> pool,
                                                         double sigma) {
  std::vector<ContextDecomposition> out(pool.size());
  const auto total = static_cast<std::ptrdiff_t>(pool.size());
  icl::detail::LoopErrors errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < total; ++c) {
    errors.run(c, [&] { out[c] = decompose_context(m, pool[c], sigma); });
  }
  errors.rethrow();
  return out;
}

SweepTable sweep_table(std::span<const ContextBatch> pool, std::span<const double> w_grid, double sigma) {
  SweepTable table = detail::empty_sweep_table(w_grid.size(), pool.size());
  const auto total = static_cast<std::ptrdiff_t>(pool.size());
  icl::detail::LoopErrors errors;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t c = 0; c < total; ++c) {
    errors.run(c, [&] { detail::sweep_item(pool[c], w_grid, sigma, table, static_cast<std::size_t>(c)); });
  }
  errors.rethrow();
  return table;
}

std::uint64_t cap_hits(std::size_t d, double eps, std::size_t samples, const RngStream& rng) {
  const std::size_t chunks = (samples + kCapChunk - 1) / kCapChunk;
  std::vector<std::uint64_t> per_chunk(chunks, 0);
  const auto total = static_cast<std::ptrdiff_t>(chunks);
  icl::detail::LoopErrors errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < total; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kCapChunk;
    const std::size_t count = std::min(kCapChunk, samples - begin);
    errors.run(c, [&] { per_chunk[c] = detail::cap_chunk(d, eps, count, rng, static_cast<std::size_t>(c)); });
  }
  errors.rethrow();
  std::uint64_t hits = 0;
  for (auto h : per_chunk) hits += h;
  return hits;
}

}  // namespace icl::kernels
