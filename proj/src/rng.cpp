#include "ibcaan/rng.hpp"

#include <cmath>

namespace ibcaan {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGamma);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::shuffle(std::vector<std::size_t>& values) {
  if (values.empty()) return;
  for (std::size_t i = values.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(next_u64() % (i + 1));
    std::swap(values[i], values[j]);
  }
}

}  // namespace ibcaan
