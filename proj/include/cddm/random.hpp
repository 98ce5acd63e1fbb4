#pragma once

#include <cstdint>

#include "cddm/tensor.hpp"

namespace cddm {

// Counter-based generator: draw n of stream s under seed x is a pure function of (x, s, n),
// so parallel workers can reproduce any sample without sharing state.
class RandomSource {
 public:
  RandomSource(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [lo, hi] inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  double normal();

  // A child source whose stream is derived from this one's (seed, stream) and `index`.
  RandomSource derive(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

Tensor gaussian(RandomSource& rng, const Shape& shape);
Tensor uniform(RandomSource& rng, const Shape& shape, float lo, float hi);

std::uint64_t mix64(std::uint64_t x);

}  // namespace cddm
