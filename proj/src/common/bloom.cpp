#include "minihouse/common/bloom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "minihouse/common/checksum.hpp"

namespace minihouse {

std::uint64_t hash_value(const Value& v) noexcept {
  switch (v.index()) {
    case 0: return mix64(0x6E756C6CULL);
    case 1: return mix64(static_cast<std::uint64_t>(std::get<1>(v)) ^ 0x1000000000000000ULL);
    case 2: return mix64(std::bit_cast<std::uint64_t>(std::get<2>(v)) ^ 0x2000000000000000ULL);
    case 3: return hash_bytes(std::get<3>(v), 3);
    case 4: {
      const auto& vec = std::get<4>(v);
      return hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(vec.data()), vec.size() * sizeof(float)), 4);
    }
  }
  return 0;
}

std::uint64_t hash_row(const Row& values) noexcept {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (const auto& v : values) h = mix64(h ^ hash_value(v)) + 0x9E3779B97F4A7C15ULL;
  return h;
}

BloomFilter::BloomFilter(std::uint32_t num_bits, std::uint8_t num_hashes)
    : num_bits_(std::max<std::uint32_t>(num_bits, 8)),
      num_hashes_(std::max<std::uint8_t>(num_hashes, 1)),
      bits_((num_bits_ + 7) / 8, 0) {}

BloomFilter BloomFilter::with_bits_per_key(std::size_t expected_keys, double bits_per_key, std::uint8_t num_hashes) {
  auto bits = static_cast<std::uint32_t>(std::ceil(static_cast<double>(std::max<std::size_t>(expected_keys, 1)) * bits_per_key));
  return BloomFilter(std::max<std::uint32_t>(bits, 64), num_hashes);
}

BloomFilter BloomFilter::with_fpr(std::size_t expected_keys, double fpr) {
  const double n = static_cast<double>(std::max<std::size_t>(expected_keys, 1));
  const double ln2 = std::log(2.0);
  const double m = std::ceil(-n * std::log(fpr) / (ln2 * ln2));
  const auto k = static_cast<std::uint8_t>(std::clamp(std::lround(m / n * ln2), 1L, 30L));
  return BloomFilter(std::max<std::uint32_t>(static_cast<std::uint32_t>(m), 64), k);
}

void BloomFilter::insert(std::uint64_t hash) noexcept {
  const std::uint64_t h2 = mix64(hash) | 1;
  for (std::uint32_t i = 0; i < num_hashes_; ++i) {
    const std::uint64_t bit = (hash + i * h2) % num_bits_;
    bits_[bit >> 3] |= static_cast<std::uint8_t>(1u << (bit & 7));
  }
}

bool BloomFilter::may_contain(std::uint64_t hash) const noexcept {
  if (num_bits_ == 0) return false;
  const std::uint64_t h2 = mix64(hash) | 1;
  for (std::uint32_t i = 0; i < num_hashes_; ++i) {
    const std::uint64_t bit = (hash + i * h2) % num_bits_;
    if (!(bits_[bit >> 3] & (1u << (bit & 7)))) return false;
  }
  return true;
}

void BloomFilter::serialize(ByteWriter& w) const {
  w.put<std::uint32_t>(num_bits_);
  w.put<std::uint8_t>(num_hashes_);
  w.put_bytes(ByteSpan(bits_));
}

BloomFilter BloomFilter::deserialize(ByteReader& r) {
  BloomFilter f;
  f.num_bits_ = r.get<std::uint32_t>();
  f.num_hashes_ = r.get<std::uint8_t>();
  if (f.num_bits_ == 0 || f.num_hashes_ == 0) r.raise("bloom: empty filter");
  auto raw = r.get_bytes((f.num_bits_ + 7) / 8);
  f.bits_.assign(raw.begin(), raw.end());
  return f;
}

}  // namespace minihouse
