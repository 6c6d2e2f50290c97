#include "minihouse/common/value.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

namespace minihouse {

std::string_view to_string(ColumnType type) noexcept {
  switch (type) {
    case ColumnType::Int64: return "int64";
    case ColumnType::Float64: return "float64";
    case ColumnType::String: return "string";
    case ColumnType::Vector: return "vector";
  }
  return "unknown";
}

std::optional<ColumnType> parse_column_type(std::string_view name) noexcept {
  if (name == "int64" || name == "int") return ColumnType::Int64;
  if (name == "float64" || name == "double") return ColumnType::Float64;
  if (name == "string" || name == "text") return ColumnType::String;
  if (name == "vector") return ColumnType::Vector;
  return std::nullopt;
}

std::optional<ColumnType> type_of(const Value& v) noexcept {
  switch (v.index()) {
    case 1: return ColumnType::Int64;
    case 2: return ColumnType::Float64;
    case 3: return ColumnType::String;
    case 4: return ColumnType::Vector;
    default: return std::nullopt;
  }
}

namespace {

bool same_bits(double a, double b) noexcept {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool same_bits(float a, float b) noexcept {
  return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
}

// Orders doubles numerically; NaNs sort after everything, -0.0 before +0.0.
int compare_doubles(double a, double b) noexcept {
  const bool na = std::isnan(a), nb = std::isnan(b);
  if (na || nb) {
    if (na && nb) {
      auto ba = std::bit_cast<std::uint64_t>(a), bb = std::bit_cast<std::uint64_t>(b);
      return ba < bb ? -1 : (ba > bb ? 1 : 0);
    }
    return na ? 1 : -1;
  }
  if (a < b) return -1;
  if (a > b) return 1;
  if (a == 0.0 && b == 0.0) {
    const bool sa = std::signbit(a), sb = std::signbit(b);
    if (sa != sb) return sa ? -1 : 1;
  }
  return 0;
}

}  // namespace

bool bit_equal(const Value& a, const Value& b) noexcept {
  if (a.index() != b.index()) return false;
  switch (a.index()) {
    case 0: return true;
    case 1: return std::get<1>(a) == std::get<1>(b);
    case 2: return same_bits(std::get<2>(a), std::get<2>(b));
    case 3: return std::get<3>(a) == std::get<3>(b);
    case 4: {
      const auto& x = std::get<4>(a);
      const auto& y = std::get<4>(b);
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (!same_bits(x[i], y[i])) return false;
      return true;
    }
  }
  return false;
}

bool bit_equal(const Row& a, const Row& b) noexcept {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bit_equal(a[i], b[i])) return false;
  return true;
}

int compare_values(const Value& a, const Value& b) noexcept {
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  switch (a.index()) {
    case 0: return 0;
    case 1: {
      auto x = std::get<1>(a), y = std::get<1>(b);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    case 2: return compare_doubles(std::get<2>(a), std::get<2>(b));
    case 3: {
      int c = std::get<3>(a).compare(std::get<3>(b));
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case 4: {
      const auto& x = std::get<4>(a);
      const auto& y = std::get<4>(b);
      std::size_t n = std::min(x.size(), y.size());
      for (std::size_t i = 0; i < n; ++i) {
        int c = compare_doubles(x[i], y[i]);
        if (c != 0) return c;
      }
      return x.size() < y.size() ? -1 : (x.size() > y.size() ? 1 : 0);
    }
  }
  return 0;
}

int compare_rows(const Row& a, const Row& b) noexcept {
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    int c = compare_values(a[i], b[i]);
    if (c != 0) return c;
  }
  return a.size() < b.size() ? -1 : (a.size() > b.size() ? 1 : 0);
}

std::string format_value(const Value& v) {
  switch (v.index()) {
    case 0: return "NULL";
    case 1: return std::to_string(std::get<1>(v));
    case 2: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", std::get<2>(v));
      return buf;
    }
    case 3: return std::get<3>(v);
    case 4: {
      std::string out = "[";
      const auto& vec = std::get<4>(v);
      for (std::size_t i = 0; i < vec.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(vec[i]));
        if (i) out += ",";
        out += buf;
      }
      return out + "]";
    }
  }
  return "?";
}

std::string format_row(const Row& row) {
  std::string out = "(";
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ", ";
    out += format_value(row[i]);
  }
  return out + ")";
}

void write_value(ByteWriter& w, const Value& v) {
  w.put(static_cast<std::uint8_t>(v.index()));
  switch (v.index()) {
    case 1: w.put(std::get<1>(v)); break;
    case 2: w.put(std::get<2>(v)); break;
    case 3: w.put_string(std::get<3>(v)); break;
    case 4: {
      const auto& vec = std::get<4>(v);
      w.put(static_cast<std::uint32_t>(vec.size()));
      for (float f : vec) w.put(f);
      break;
    }
    default: break;
  }
}

Value read_value(ByteReader& r) {
  switch (r.get<std::uint8_t>()) {
    case 0: return std::monostate{};
    case 1: return r.get<std::int64_t>();
    case 2: return r.get<double>();
    case 3: return r.get_string();
    case 4: {
      const auto n = r.get<std::uint32_t>();
      if (n > r.remaining() / 4) r.raise("vector length exceeds input");
      FloatVector vec(n);
      for (auto& f : vec) f = r.get<float>();
      return vec;
    }
    default: r.raise("unknown value tag");
  }
}

void write_row(ByteWriter& w, const Row& row) {
  w.put(static_cast<std::uint32_t>(row.size()));
  for (const auto& v : row) write_value(w, v);
}

Row read_row(ByteReader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining()) r.raise("row arity exceeds input");
  Row row;
  row.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) row.push_back(read_value(r));
  return row;
}

}  // namespace minihouse
