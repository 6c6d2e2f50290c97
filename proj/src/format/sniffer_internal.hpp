#pragma once

#include "minihouse/format/sniffer.hpp"

namespace minihouse::snf::detail {

inline constexpr std::uint16_t kSectionVersion = 1;
inline constexpr std::size_t kSectionHeader = 8;

Row key_of(const std::vector<ColumnData>& columns, const std::vector<std::uint32_t>& key_cols, std::size_t row);
void write_section(ByteWriter& w, Region tag, const Bytes& body);

Bytes encode_layout_index(const FileLayout& layout);
Bytes encode_sort_key(const FileLayout& layout);
Bytes encode_stats(const FileLayout& layout);
Bytes encode_bloom(const FileLayout& layout);
Bytes encode_schema(const Schema& schema);

// Each decoder reads a framed section and fills its part of `layout`; unknown trailing
// bytes in a section body are ignored.
void decode_layout_index(ByteSpan section, FileLayout& layout);
// Returns the key column ids recorded in the section.
std::vector<std::uint32_t> decode_sort_key(ByteSpan section, FileLayout& layout);
void decode_stats(ByteSpan section, FileLayout& layout);
void decode_bloom(ByteSpan section, FileLayout& layout);
void decode_schema(ByteSpan section, FileLayout& layout);

}  // namespace minihouse::snf::detail
