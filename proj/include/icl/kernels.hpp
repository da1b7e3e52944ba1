#pragma once

// Data-parallel Monte Carlo kernels. Each kernel has an OpenMP version and a
// serial `_ref` twin used by the tests; both write per-item results into
// index-addressed slots and leave every reduction to the caller, so the two
// produce bit-identical output for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "icl/attention.hpp"
#include "icl/rng.hpp"
#include "icl/sampling.hpp"
#include "icl/tasks.hpp"

namespace icl::kernels {

void set_num_threads(int threads);
int max_threads();

// Context c draws its task and its tokens from rng.derive(c).
std::vector<ContextBatch> make_context_pool(const TaskClass& task_class, const CovariateDist& dist, std::size_t n,
                                            std::size_t m, double sigma, std::size_t count, const RngStream& rng);
std::vector<ContextBatch> make_context_pool_ref(const TaskClass& task_class, const CovariateDist& dist,
                                                std::size_t n, std::size_t m, double sigma, std::size_t count,
                                                const RngStream& rng);

Vector context_losses(const AttentionParams& params, std::span<const ContextBatch> pool);
Vector context_losses_ref(const AttentionParams& params, std::span<const ContextBatch> pool);

std::vector<ContextDecomposition> context_decompositions(const Matrix& m, std::span<const ContextBatch> pool,
                                                         double sigma);
std::vector<ContextDecomposition> context_decompositions_ref(const Matrix& m, std::span<const ContextBatch> pool,
                                                             double sigma);

// Per-(w, context) softmax loss for M = w I, row-major [grid index][context].
struct SweepTable {
  std::size_t grid_size = 0;
  std::size_t num_contexts = 0;
  Vector loss;   // noisy-label squared error
  Vector bias;   // clean-label squared error
  Vector noise;  // sigma^2 sum_i s_i^2

  double at(const Vector& table, std::size_t w_index, std::size_t context) const {
    return table[w_index * num_contexts + context];
  }
};

SweepTable sweep_table(std::span<const ContextBatch> pool, std::span<const double> w_grid, double sigma);
SweepTable sweep_table_ref(std::span<const ContextBatch> pool, std::span<const double> w_grid, double sigma);

// Number of uniform-sphere samples with x^T e_1 > 1 - eps. Samples are drawn in
// fixed-size chunks; chunk c uses rng.derive(c).
inline constexpr std::size_t kCapChunk = 4096;
std::uint64_t cap_hits(std::size_t d, double eps, std::size_t samples, const RngStream& rng);
std::uint64_t cap_hits_ref(std::size_t d, double eps, std::size_t samples, const RngStream& rng);

}  // namespace icl::kernels
