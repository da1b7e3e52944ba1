#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace icl {

// Splittable pseudo-random stream. A (seed, stream id) pair is hashed with
// SplitMix64 into the state of a xoshiro256** generator, so the draws of one
// stream never depend on how many draws another stream made. Child streams for
// per-task or per-context work come from derive().
//
// Normals use the basic (trigonometric) Box-Muller transform with the second
// variate cached; both algorithms are fixed here so output is bit-reproducible for a
// given build.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  // Independent child stream keyed by (this stream's identity, child).
  RngStream derive(std::uint64_t child) const;

  std::uint64_t next_u64() noexcept;
  std::uint64_t operator()() noexcept { return next_u64(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept;
  double normal() noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint64_t, 4> state_{};
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace icl
