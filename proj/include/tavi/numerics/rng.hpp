#pragma once

#include <cstdint>
#include <cstddef>
#include <string_view>

namespace tavi::numerics {

// Counter-based deterministic random stream. Each draw hashes
// (seed, ++counter), so a stream's output depends only on its seed and the
// number of values drawn before, never on global state or platform RNGs.
// Identical seed + identical call sequence reproduces identical values.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();

  // Uniform double in [0, 1).
  double uniform();
  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller. Consumes two raw draws per call.
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Independent child stream keyed by a label. Children with distinct labels
  // never share draws with each other or the parent.
  RngStream derive(std::string_view label) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace tavi::numerics
