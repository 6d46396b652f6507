#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace speckle {

/// SplitMix64 step. Used to expand a 64-bit seed into generator state and
/// to derive independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives a sub-seed for a named stream, e.g. derive_seed(seed, "key").
/// Stable across platforms: the label is folded in with FNV-1a.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Derives a sub-seed for an indexed stream (per-sample noise and the like).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// xoshiro256** 1.0 (Blackman & Vigna), state seeded from SplitMix64.
///
/// Every random draw in the project goes through this generator so results
/// are bit-identical across compilers and standard libraries. Distribution
/// helpers are implemented here rather than via <random> distributions,
/// whose algorithms are implementation-defined:
///   - uniform():  top 53 bits scaled by 2^-53, in [0, 1)
///   - normal():   Box-Muller on (1 - uniform(), uniform()), both outputs
///                 used in sequence (cos branch first)
///   - below(n):   Lemire's multiply-shift with rejection, unbiased
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle of an index range driven by `rng`.
void shuffle_indices(std::span<std::size_t> indices, Xoshiro256& rng);

}  // namespace speckle
