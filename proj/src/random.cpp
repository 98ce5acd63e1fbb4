#include "cddm/random.hpp"

#include <cmath>
#include <numbers>

#include "cddm/errors.hpp"

namespace cddm {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(mix64(mix64(seed) ^ mix64(stream ^ 0x5851F42D4C957F2DULL))) {}

std::uint64_t RandomSource::next_u64() {
  const std::uint64_t n = counter_++;
  return mix64(key_ ^ mix64(n + 0x632BE59BD9B4E019ULL));
}

double RandomSource::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RandomSource::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  require(lo <= hi, "uniform_int: empty range");
  const std::uint64_t span = hi - lo + 1;
  if (span == 0) return next_u64();
  // rejection sampling removes modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
  std::uint64_t r = next_u64();
  while (r >= limit) r = next_u64();
  return lo + r % span;
}

double RandomSource::normal() {
  // Box-Muller; one normal per pair of uniforms keeps the counter arithmetic simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomSource RandomSource::derive(std::uint64_t index) const {
  return RandomSource(seed_, mix64(stream_ * 0x9E3779B97F4A7C15ULL + index + 1));
}

Tensor gaussian(RandomSource& rng, const Shape& shape) {
  Tensor out(shape);
  for (float& v : out.values()) v = static_cast<float>(rng.normal());
  return out;
}

Tensor uniform(RandomSource& rng, const Shape& shape, float lo, float hi) {
  Tensor out(shape);
  for (float& v : out.values()) v = lo + static_cast<float>(rng.uniform()) * (hi - lo);
  return out;
}

}  // namespace cddm
