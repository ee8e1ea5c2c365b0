#include "ulc/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace ulc {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::uniform() {
  // 53 random mantissa bits, shifted by half an ulp so 0 is never produced.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RandomStream::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t draw = next_u64();
  while (draw >= limit) draw = next_u64();
  return draw % bound;
}

RandomStream RandomStream::derive(std::uint64_t tag) const {
  return RandomStream(mix64(key_ ^ mix64(tag + kGolden)));
}

RandomStream RandomStream::derive(std::initializer_list<std::uint64_t> tags) const {
  RandomStream out = *this;
  for (std::uint64_t t : tags) out = out.derive(t);
  return out;
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t salt) {
  std::uint64_t h = mix64(salt ^ 0x51ED270B27A3C4F1ULL);
  for (double v : values) {
    // Canonicalise -0.0 so equal parameters hash equally.
    const double canon = (v == 0.0) ? 0.0 : v;
    h = mix64(h ^ std::bit_cast<std::uint64_t>(canon));
  }
  return h;
}

}  // namespace ulc
