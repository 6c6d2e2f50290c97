#include "minihouse/encodings/vectors.hpp"

#include <algorithm>
#include <cmath>

namespace minihouse::enc {

VectorStats compute_stats(std::span<const float> v) noexcept {
  VectorStats s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  s.l2_norm = static_cast<float>(std::sqrt(sq));
  return s;
}

std::optional<std::size_t> VectorColumn::present_ordinal(std::size_t row) const {
  if (row >= presence.size() || !presence[row]) return std::nullopt;
  return static_cast<std::size_t>(std::count(presence.begin(), presence.begin() + static_cast<std::ptrdiff_t>(row), true));
}

std::span<const float> VectorColumn::slice(std::size_t row) const {
  auto k = present_ordinal(row);
  if (!k) return {};
  return std::span<const float>(values).subspan(offsets[*k], lengths[*k]);
}

VectorColumn encode_vectors_lp(const OptionalVectors& rows) {
  VectorColumn col;
  col.presence.reserve(rows.size());
  for (const auto& r : rows) {
    col.presence.push_back(r.has_value());
    if (!r) continue;
    col.offsets.push_back(col.values.size());
    col.lengths.push_back(static_cast<std::uint32_t>(r->size()));
    col.stats.push_back(compute_stats(*r));
    col.values.insert(col.values.end(), r->begin(), r->end());
  }
  return col;
}

OptionalVectors decode_vectors_lp(const VectorColumn& column) {
  OptionalVectors out;
  out.reserve(column.row_count());
  std::size_t k = 0;
  for (bool present : column.presence) {
    if (!present) {
      out.emplace_back(std::nullopt);
      continue;
    }
    auto first = column.values.begin() + static_cast<std::ptrdiff_t>(column.offsets[k]);
    out.emplace_back(FloatVector(first, first + column.lengths[k]));
    ++k;
  }
  return out;
}

Bytes serialize_lp(const VectorColumn& column) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(column.row_count()));
  Bytes bitmap((column.row_count() + 7) / 8, 0);
  for (std::size_t i = 0; i < column.row_count(); ++i) {
    if (column.presence[i]) bitmap[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
  }
  w.put_bytes(ByteSpan(bitmap));
  for (auto len : column.lengths) w.put(len);
  for (const auto& s : column.stats) {
    w.put(s.min);
    w.put(s.max);
    w.put(s.l2_norm);
  }
  for (float v : column.values) w.put(v);
  return w.take();
}

VectorColumn deserialize_lp(ByteSpan bytes) {
  ByteReader r(bytes);
  VectorColumn col;
  const auto rows = r.get<std::uint32_t>();
  auto bitmap = r.get_bytes((static_cast<std::size_t>(rows) + 7) / 8);
  col.presence.resize(rows);
  std::size_t present = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    col.presence[i] = (bitmap[i >> 3] >> (i & 7)) & 1u;
    present += col.presence[i];
  }
  if (present > r.remaining() / 16) r.raise("L&P: presence count exceeds payload");
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < present; ++k) {
    col.offsets.push_back(total);
    col.lengths.push_back(r.get<std::uint32_t>());
    total += col.lengths.back();
  }
  for (std::size_t k = 0; k < present; ++k) {
    VectorStats s;
    s.min = r.get<float>();
    s.max = r.get<float>();
    s.l2_norm = r.get<float>();
    col.stats.push_back(s);
  }
  if (r.remaining() != total * sizeof(float)) r.raise("L&P: value region disagrees with lengths");
  col.values.reserve(total);
  for (std::uint64_t i = 0; i < total; ++i) col.values.push_back(r.get<float>());
  return col;
}

}  // namespace minihouse::enc
