#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "minihouse/common/error.hpp"

namespace minihouse {

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

// Appends little-endian primitives to a growable buffer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : out_(&out) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf().insert(buf().end(), raw, raw + sizeof(T));
  }

  void put_bytes(ByteSpan bytes) { buf().insert(buf().end(), bytes.begin(), bytes.end()); }
  void put_bytes(std::string_view s) { buf().insert(buf().end(), s.begin(), s.end()); }

  // u32 length prefix followed by the raw bytes.
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }

  // Overwrites a previously written u32 at `pos`.
  void patch_u32(std::size_t pos, std::uint32_t v) { std::memcpy(buf().data() + pos, &v, 4); }

  std::size_t size() const { return out_ ? out_->size() : own_.size(); }
  Bytes& buf() { return out_ ? *out_ : own_; }
  Bytes take() { return std::move(buf()); }

 private:
  Bytes* out_ = nullptr;
  Bytes own_;
};

// Bounds-checked little-endian reader; every overrun raises `error_code`.
class ByteReader {
 public:
  explicit ByteReader(ByteSpan data, ErrorCode error_code = ErrorCode::MalformedPayload)
      : data_(data), code_(error_code) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  ByteSpan get_bytes(std::size_t n) {
    need(n);
    ByteSpan s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::string get_string() {
    auto n = get<std::uint32_t>();
    auto s = get_bytes(n);
    return std::string(reinterpret_cast<const char*>(s.data()), s.size());
  }

  void skip(std::size_t n) { get_bytes(n); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  void expect_end(const char* what) const {
    if (!at_end()) fail(code_, std::string(what) + ": trailing bytes");
  }

  [[noreturn]] void raise(const std::string& what) const { fail(code_, what); }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) fail(code_, "truncated input");
  }

  ByteSpan data_;
  std::size_t pos_ = 0;
  ErrorCode code_;
};

}  // namespace minihouse
