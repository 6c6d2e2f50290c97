#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "minihouse/common/bytes.hpp"
#include "minihouse/common/value.hpp"

namespace minihouse::enc {

struct VectorStats {
  float min = 0;
  float max = 0;
  float l2_norm = 0;
};

// Length-and-presence layout: present rows store exactly their own elements, absent rows
// store nothing. lengths/stats/offsets are indexed by present-row ordinal.
struct VectorColumn {
  std::vector<bool> presence;
  std::vector<std::uint32_t> lengths;
  std::vector<VectorStats> stats;
  std::vector<std::uint64_t> offsets;  // start of each present slice in `values`
  std::vector<float> values;

  std::size_t row_count() const noexcept { return presence.size(); }
  std::size_t present_count() const noexcept { return lengths.size(); }

  // Slice for a row; empty for absent rows.
  std::span<const float> slice(std::size_t row) const;
  std::optional<std::size_t> present_ordinal(std::size_t row) const;
};

using OptionalVectors = std::vector<std::optional<FloatVector>>;

VectorColumn encode_vectors_lp(const OptionalVectors& rows);
OptionalVectors decode_vectors_lp(const VectorColumn& column);

VectorStats compute_stats(std::span<const float> v) noexcept;

// [u32 rows][presence bitmap][u32 length per present row][stats 12B per present row][f32 values]
Bytes serialize_lp(const VectorColumn& column);
VectorColumn deserialize_lp(ByteSpan bytes);

}  // namespace minihouse::enc
