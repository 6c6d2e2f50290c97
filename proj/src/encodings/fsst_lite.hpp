#pragma once

#include <string>
#include <vector>

#include "minihouse/common/bytes.hpp"
#include "minihouse/encodings/codec.hpp"

namespace minihouse::enc::detail {

// Static symbol table: up to 255 symbols of 1..8 bytes, code 255 escapes one literal byte.
inline constexpr std::uint8_t kEscape = 255;
inline constexpr std::size_t kMaxSymbols = 255;
inline constexpr std::size_t kMaxSymbolLen = 8;

class SymbolTable {
 public:
  static SymbolTable train(const std::vector<std::string>& sample);

  void add(std::string symbol);
  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(std::size_t code) const { return symbols_[code]; }

  // Longest symbol matching at `pos`, or -1.
  int match(std::string_view text, std::size_t pos) const;
  void encode(std::string_view text, std::string& out) const;

 private:
  std::vector<std::string> symbols_;
  std::vector<std::vector<std::uint8_t>> by_first_byte_ = std::vector<std::vector<std::uint8_t>>(256);
};

void write_fsst(ByteWriter& w, const std::vector<std::string>& values);
std::vector<std::string> read_fsst(ByteReader& r, std::size_t n);
std::size_t fsst_code_bytes(const EncodedBlock& block);

}  // namespace minihouse::enc::detail
