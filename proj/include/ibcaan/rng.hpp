#pragma once

#include <cstdint>
#include <vector>

namespace ibcaan {

// Counter-based deterministic generator (SplitMix64).
//
// Draw i is a pure function of (seed, i):
//   out(i) = mix64(seed + (i+1) * 0x9E3779B97F4A7C15)
// where mix64 is the SplitMix64 finalizer. Derived draws:
//   uniform(): (out >> 11) * 2^-53, in [0, 1)
//   normal():  Box-Muller, consumes two raw draws x1, x2:
//              u1 = ((x1 >> 11) + 1) * 2^-53   in (0, 1]
//              u2 = (x2 >> 11) * 2^-53         in [0, 1)
//              z  = sqrt(-2 ln u1) * cos(2 pi u2)
// Streams are reproducible from the seed alone; the counter is exposed so
// callers can verify that a code path consumed no randomness.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  double uniform();
  double normal();

  // Deterministic Fisher-Yates shuffle (index j = next_u64() % (i+1)).
  void shuffle(std::vector<std::size_t>& values);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace ibcaan
