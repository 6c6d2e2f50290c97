#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "minihouse/common/bytes.hpp"

namespace minihouse {

enum class ColumnType : std::uint8_t {
  Int64 = 1,
  Float64 = 2,
  String = 3,
  Vector = 4,  // variable-length float32 sequence
};

std::string_view to_string(ColumnType type) noexcept;
std::optional<ColumnType> parse_column_type(std::string_view name) noexcept;

using FloatVector = std::vector<float>;

// A single cell. std::monostate is SQL NULL.
using Value = std::variant<std::monostate, std::int64_t, double, std::string, FloatVector>;
using Row = std::vector<Value>;

inline bool is_null(const Value& v) noexcept { return std::holds_alternative<std::monostate>(v); }

// Type a non-null value belongs to; nullopt for NULL.
std::optional<ColumnType> type_of(const Value& v) noexcept;

// Equality that distinguishes -0.0 from 0.0 and treats identical NaN payloads as equal.
bool bit_equal(const Value& a, const Value& b) noexcept;
bool bit_equal(const Row& a, const Row& b) noexcept;

// Total order used by sort keys and stats: NULL first, then by alternative. Doubles order
// numerically with -0.0 < +0.0 and NaN last.
int compare_values(const Value& a, const Value& b) noexcept;

struct ValueLess {
  bool operator()(const Value& a, const Value& b) const noexcept { return compare_values(a, b) < 0; }
};

int compare_rows(const Row& a, const Row& b) noexcept;

struct RowLess {
  bool operator()(const Row& a, const Row& b) const noexcept { return compare_rows(a, b) < 0; }
};

std::string format_value(const Value& v);
std::string format_row(const Row& row);

// [u8 variant index][payload]; strings u32-length-prefixed, vectors u32 count + f32 elements.
void write_value(ByteWriter& w, const Value& v);
Value read_value(ByteReader& r);
void write_row(ByteWriter& w, const Row& row);
Row read_row(ByteReader& r);

}  // namespace minihouse
