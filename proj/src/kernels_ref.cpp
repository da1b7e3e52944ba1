#include <algorithm>

#include "icl/kernels.hpp"
#include "kernel_items.hpp"

namespace icl::kernels {

std::vector<ContextBatch> make_context_pool_ref(const TaskClass& task_class, const CovariateDist& dist,
                                                std::size_t n, std::size_t m, double sigma, std::size_t count,
                                                const RngStream& rng) {
  std::vector<ContextBatch> pool;
  pool.reserve(count);
  for (std::size_t c = 0; c < count; ++c) pool.push_back(detail::make_pool_item(task_class, dist, n, m, sigma, rng, c));
  return pool;
}

Vector context_losses_ref(const AttentionParams& params, std::span<const ContextBatch> pool) {
  Vector out(pool.size());
  for (std::size_t c = 0; c < pool.size(); ++c) out[c] = context_sq_loss(params, pool[c]);
  return out;
}

std::vector<ContextDecomposition> context_decompositions_ref(const Matrix& m, std::span<const ContextBatch> pool,
                                                             double sigma) {
  std::vector<ContextDecomposition> out(pool.size());
  for (std::size_t c = 0; c < pool.size(); ++c) out[c] = decompose_context(m, pool[c], sigma);
  return out;
}

SweepTable sweep_table_ref(std::span<const ContextBatch> pool, std::span<const double> w_grid, double sigma) {
  SweepTable table = detail::empty_sweep_table(w_grid.size(), pool.size());
  for (std::size_t c = 0; c < pool.size(); ++c) detail::sweep_item(pool[c], w_grid, sigma, table, c);
  return table;
}

std::uint64_t cap_hits_ref(std::size_t d, double eps, std::size_t samples, const RngStream& rng) {
  std::uint64_t hits = 0;
  for (std::size_t begin = 0, c = 0; begin < samples; begin += kCapChunk, ++c) {
    hits += detail::cap_chunk(d, eps, std::min(kCapChunk, samples - begin), rng, c);
  }
  return hits;
}

}  // namespace icl::kernels
