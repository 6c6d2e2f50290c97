#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace minihouse {

// CRC-32C (Castagnoli), the checksum used by every region, WAL record and block.
std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept;
std::uint32_t crc32c(std::string_view data) noexcept;

// Stable 64-bit hashes; values persist in files so they must never depend on the platform.
std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t hash_bytes(std::span<const std::uint8_t> data, std::uint64_t seed = 0) noexcept;
std::uint64_t hash_bytes(std::string_view data, std::uint64_t seed = 0) noexcept;

}  // namespace minihouse
