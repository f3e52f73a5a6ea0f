// Deterministic, hierarchically derivable random number generator.
//
// Every stochastic stage of the pipeline draws from a SeededRng derived
// from (root seed, scene id, stage label). Two runs with the same seed and
// derivation path produce identical streams on any platform; sibling paths
// produce independent streams. Nothing in the project reads global
// randomness.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace occl {

/// xoshiro256** stream seeded through splitmix64, with label/index
/// derivation. Copyable; copies continue the stream independently.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  /// Child generator for a named sub-stage. derive("place") twice yields
  /// the same child; different labels yield unrelated streams.
  SeededRng derive(std::string_view label) const;
  /// Child generator for an indexed item (scene id, candidate id, ...).
  SeededRng derive(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_double();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n);
  /// Standard normal via Box-Muller (deterministic, no std::distribution).
  double normal();

  std::uint64_t state_hash() const;  // for manifests / debugging

 private:
  SeededRng() = default;
  std::uint64_t s_[4] = {0, 0, 0, 0};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace occl
