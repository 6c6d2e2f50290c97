#include "minihouse/common/checksum.hpp"

#include <boost/crc.hpp>

namespace minihouse {

namespace {
using Crc32c = boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true>;
}

std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept {
  Crc32c crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

std::uint32_t crc32c(std::string_view data) noexcept {
  Crc32c crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a over the bytes, finished with mix64 to spread low-entropy inputs.
std::uint64_t hash_bytes(std::span<const std::uint8_t> data, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ mix64(seed);
  for (auto b : data) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return mix64(h ^ data.size());
}

std::uint64_t hash_bytes(std::string_view data, std::uint64_t seed) noexcept {
  return hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()), seed);
}

}  // namespace minihouse
