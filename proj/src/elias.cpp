#include "ulc/elias.hpp"

#include <bit>
#include <stdexcept>

namespace ulc {

namespace {

int floor_log2(std::uint64_t v) { return 63 - std::countl_zero(v); }

}  // namespace

int elias_length(std::uint64_t i) {
  if (i == 0) throw std::invalid_argument("Elias code needs a positive integer");
  const int b = floor_log2(i);
  return b + 2 * floor_log2(static_cast<std::uint64_t>(b) + 1) + 1;
}

void elias_append(BitString& out, std::uint64_t i) {
  if (i == 0) throw std::invalid_argument("Elias code needs a positive integer");
  // N = number of bits of i; write floor(log2 N) zeros, N in binary, then i
  // without its leading one.
  const int n = floor_log2(i) + 1;
  const int l = floor_log2(static_cast<std::uint64_t>(n));
  for (int k = 0; k < l; ++k) out.push_back(false);
  out.append_uint(static_cast<std::uint64_t>(n), l + 1);
  out.append_uint(i, n - 1);
}

BitString elias_encode(std::uint64_t i) {
  BitString out;
  elias_append(out, i);
  return out;
}

std::uint64_t elias_decode(BitReader& reader) {
  const std::size_t start = reader.position();
  int zeros = 0;
  while (!reader.read_bit()) {
    if (++zeros > 6) throw ParseError("Elias prefix too long", start);
  }
  std::uint64_t n = 1;
  for (int k = 0; k < zeros; ++k) n = (n << 1) | (reader.read_bit() ? 1U : 0U);
  if (n > 64) throw ParseError("Elias length field exceeds 64 bits", start);
  std::uint64_t v = 1;
  for (std::uint64_t k = 1; k < n; ++k) v = (v << 1) | (reader.read_bit() ? 1U : 0U);
  return v;
}

std::pair<std::uint64_t, std::size_t> elias_decode(const BitString& bits, std::size_t start) {
  BitReader reader(bits, start);
  const std::uint64_t v = elias_decode(reader);
  return {v, reader.position() - start};
}

}  // namespace ulc
