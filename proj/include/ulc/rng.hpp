#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace ulc {

/// Counter-based pseudo-random stream.
///
/// Output i of a stream with key k is splitmix64(k + (i + 1) * golden), so any
/// position can be reproduced from (key, counter) alone and two parties that
/// agree on a key see identical sequences. Child streams are derived by
/// hashing the parent key with integer tags. Streams are cheap values; pass
/// them by value or by reference, never share one across threads.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t key) : key_(key) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1).
  double uniform();

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  RandomStream derive(std::uint64_t tag) const;
  RandomStream derive(std::initializer_list<std::uint64_t> tags) const;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t z);

/// Order-sensitive hash of a sequence of doubles (bit patterns).
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t salt = 0);

}  // namespace ulc
