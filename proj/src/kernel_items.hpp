#pragma once

// Per-item bodies shared by the parallel kernels and their serial twins.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "icl/attention.hpp"
#include "icl/kernels.hpp"

namespace icl::kernels::detail {

inline ContextBatch make_pool_item(const TaskClass& task_class, const CovariateDist& dist, std::size_t n,
                                   std::size_t m, double sigma, const RngStream& rng, std::size_t c) {
  RngStream stream = rng.derive(c);
  const TaskSpec task = draw_task(task_class, dist.dim(), stream);
  return make_context(task, dist, n, m, sigma, stream);
}

inline void sweep_item(const ContextBatch& batch, std::span<const double> w_grid, double sigma, SweepTable& table,
                       std::size_t c) {
  const std::size_t n = batch.n();
  const std::size_t m = batch.m();
  Vector clean(n);
  for (std::size_t i = 0; i < n; ++i) clean[i] = evaluate_task(batch.task, batch.X.row(i));

  Matrix dots(m, n);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i) dots(j, i) = dot(batch.X.row(i), batch.Q.row(j));
  Vector logits(n);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t g = 0; g < w_grid.size(); ++g) {
    double loss = 0.0;
    double bias = 0.0;
    double noise = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto row = dots.row(j);
      for (std::size_t i = 0; i < n; ++i) logits[i] = w_grid[g] * row[i];
      const Vector s = softmax_of_logits(logits);
      double p_noisy = 0.0;
      double p_clean = 0.0;
      double sum_sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        p_noisy += s[i] * batch.y[i];
        p_clean += s[i] * clean[i];
        sum_sq += s[i] * s[i];
      }
      loss += (p_noisy - batch.t[j]) * (p_noisy - batch.t[j]);
      bias += (p_clean - batch.t[j]) * (p_clean - batch.t[j]);
      noise += sigma * sigma * sum_sq;
    }
    const std::size_t slot = g * table.num_contexts + c;
    table.loss[slot] = loss * inv_m;
    table.bias[slot] = bias * inv_m;
    table.noise[slot] = noise * inv_m;
  }
}

inline std::uint64_t cap_chunk(std::size_t d, double eps, std::size_t count, const RngStream& rng, std::size_t c) {
  RngStream stream = rng.derive(c);
  std::uint64_t hits = 0;
  Vector g(d);
  for (std::size_t k = 0; k < count; ++k) {
    for (double& x : g) x = stream.normal();
    const double ng = norm2(g);
    if (ng > 0.0 && g[0] / ng > 1.0 - eps) ++hits;
  }
  return hits;
}

inline SweepTable empty_sweep_table(std::size_t grid, std::size_t contexts) {
  SweepTable table;
  table.grid_size = grid;
  table.num_contexts = contexts;
  table.loss.assign(grid * contexts, 0.0);
  table.bias.assign(grid * contexts, 0.0);
  table.noise.assign(grid * contexts, 0.0);
  return table;
}

}  // namespace icl::kernels::detail
