#pragma once

// Elias delta code for positive integers.

#include <cstdint>
#include <utility>

#include "ulc/bits.hpp"

namespace ulc {

/// floor(log2 i) + 2 floor(log2(floor(log2 i) + 1)) + 1
int elias_length(std::uint64_t i);

/// Appends the delta codeword of i >= 1.
void elias_append(BitString& out, std::uint64_t i);
BitString elias_encode(std::uint64_t i);

/// Reads one codeword. Throws ParseError (with the bit position) on a
/// truncated or impossible prefix.
std::uint64_t elias_decode(BitReader& reader);
/// (value, bits consumed) starting at `start`.
std::pair<std::uint64_t, std::size_t> elias_decode(const BitString& bits, std::size_t start = 0);

}  // namespace ulc
