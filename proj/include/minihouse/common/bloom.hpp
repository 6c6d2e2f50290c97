#pragma once

#include <cstdint>
#include <vector>

#include "minihouse/common/bytes.hpp"
#include "minihouse/common/value.hpp"

namespace minihouse {

std::uint64_t hash_value(const Value& v) noexcept;
std::uint64_t hash_row(const Row& values) noexcept;

// Standard bloom filter with Kirsch-Mitzenmacher double hashing over a 64-bit key hash.
class BloomFilter {
 public:
  BloomFilter() = default;
  BloomFilter(std::uint32_t num_bits, std::uint8_t num_hashes);

  static BloomFilter with_bits_per_key(std::size_t expected_keys, double bits_per_key, std::uint8_t num_hashes);
  // Sized for a target false-positive rate using the textbook optimum.
  static BloomFilter with_fpr(std::size_t expected_keys, double fpr);

  void insert(std::uint64_t hash) noexcept;
  bool may_contain(std::uint64_t hash) const noexcept;

  std::uint32_t num_bits() const noexcept { return num_bits_; }
  std::uint8_t num_hashes() const noexcept { return num_hashes_; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  void serialize(ByteWriter& w) const;
  static BloomFilter deserialize(ByteReader& r);

 private:
  std::uint32_t num_bits_ = 0;
  std::uint8_t num_hashes_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace minihouse
