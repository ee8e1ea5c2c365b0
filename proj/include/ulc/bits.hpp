#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ulc {

/// Growable sequence of bits, most significant first when packed to bytes.
class BitString {
 public:
  BitString() = default;
  explicit BitString(std::string_view zeros_and_ones);

  void push_back(bool bit) { bits_.push_back(bit); }
  void append(const BitString& other);
  /// Appends the low `width` bits of `value`, most significant first.
  void append_uint(std::uint64_t value, int width);

  std::size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }
  bool operator[](std::size_t i) const { return bits_[i]; }

  std::string to_string() const;
  std::vector<std::uint8_t> pack() const;
  static BitString unpack(const std::vector<std::uint8_t>& bytes, std::size_t bit_count);

  bool starts_with(const BitString& prefix) const;

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::vector<bool> bits_;
};

/// Thrown when a bit stream cannot be parsed. `position` is the bit offset
/// at which parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at bit " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Sequential reader over a BitString.
class BitReader {
 public:
  explicit BitReader(const BitString& bits, std::size_t start = 0) : bits_(&bits), pos_(start) {}

  bool read_bit();
  std::uint64_t read_uint(int width);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bits_->size() - pos_; }
  bool at_end() const { return pos_ >= bits_->size(); }

 private:
  const BitString* bits_;
  std::size_t pos_;
};

}  // namespace ulc
