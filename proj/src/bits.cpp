#include "ulc/bits.hpp"

namespace ulc {

BitString::BitString(std::string_view zeros_and_ones) {
  bits_.reserve(zeros_and_ones.size());
  for (char c : zeros_and_ones) {
    if (c != '0' && c != '1') throw std::invalid_argument("BitString: expected only '0' and '1'");
    bits_.push_back(c == '1');
  }
}

void BitString::append(const BitString& other) {
  bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
}

void BitString::append_uint(std::uint64_t value, int width) {
  for (int b = width - 1; b >= 0; --b) bits_.push_back(((value >> b) & 1U) != 0);
}

std::string BitString::to_string() const {
  std::string out;
  out.reserve(bits_.size());
  for (bool b : bits_) out.push_back(b ? '1' : '0');
  return out;
}

std::vector<std::uint8_t> BitString::pack() const {
  std::vector<std::uint8_t> bytes((bits_.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) bytes[i / 8] |= static_cast<std::uint8_t>(0x80U >> (i % 8));
  }
  return bytes;
}

BitString BitString::unpack(const std::vector<std::uint8_t>& bytes, std::size_t bit_count) {
  if (bit_count > bytes.size() * 8) throw ParseError("bit count exceeds payload", bytes.size() * 8);
  BitString out;
  out.bits_.reserve(bit_count);
  for (std::size_t i = 0; i < bit_count; ++i) {
    out.bits_.push_back(((bytes[i / 8] >> (7 - i % 8)) & 1U) != 0);
  }
  return out;
}

bool BitString::starts_with(const BitString& prefix) const {
  if (prefix.size() > size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (bits_[i] != prefix.bits_[i]) return false;
  }
  return true;
}

bool BitReader::read_bit() {
  if (pos_ >= bits_->size()) throw ParseError("unexpected end of bit stream", pos_);
  return (*bits_)[pos_++];
}

std::uint64_t BitReader::read_uint(int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 1) | (read_bit() ? 1U : 0U);
  return v;
}

}  // namespace ulc
