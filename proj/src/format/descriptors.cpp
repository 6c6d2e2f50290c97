#include "sniffer_internal.hpp"

namespace minihouse::snf::detail {

namespace {

ByteReader open_section(ByteSpan section, Region expected) {
  ByteReader r(section, ErrorCode::MalformedDescriptor);
  const auto tag = r.get<std::uint16_t>();
  const auto version = r.get<std::uint16_t>();
  const auto len = r.get<std::uint32_t>();
  if (tag != static_cast<std::uint16_t>(expected)) r.raise("section tag " + std::to_string(tag));
  if (version == 0) r.raise("section version 0");
  if (len != r.remaining()) r.raise("section length disagrees with footer");
  return r;
}

void put_ids(ByteWriter& w, const std::vector<std::uint32_t>& ids) {
  w.put(static_cast<std::uint32_t>(ids.size()));
  for (auto id : ids) w.put(id);
}

std::vector<std::uint32_t> get_ids(ByteReader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining() / 4) r.raise("id list exceeds section");
  std::vector<std::uint32_t> ids(n);
  for (auto& id : ids) id = r.get<std::uint32_t>();
  return ids;
}

void check_groups(ByteReader& r, const FileLayout& layout, std::uint32_t n) {
  if (n != layout.footer.num_groups) r.raise("group count disagrees with footer");
}

}  // namespace

Bytes encode_layout_index(const FileLayout& layout) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(layout.record_groups.size()));
  for (const auto& g : layout.record_groups) {
    w.put(g.row_begin);
    w.put(g.row_end);
    w.put(static_cast<std::uint32_t>(g.block_rows.size()));
    for (auto rows : g.block_rows) w.put(rows);
    w.put(static_cast<std::uint32_t>(g.partitions.size()));
    for (const auto& p : g.partitions) {
      w.put(p.column_id);
      w.put(static_cast<std::uint32_t>(p.blocks.size()));
      for (const auto& b : p.blocks) {
        w.put(b.file_offset);
        w.put(b.byte_length);
        w.put(static_cast<std::uint8_t>(b.codec));
        w.put(b.row_count);
        w.put(b.crc);
      }
    }
  }
  return w.take();
}

void decode_layout_index(ByteSpan section, FileLayout& layout) {
  auto r = open_section(section, Region::LayoutIndex);
  const auto n = r.get<std::uint32_t>();
  check_groups(r, layout, n);
  layout.record_groups.clear();
  std::uint64_t expect_begin = 0;
  for (std::uint32_t gi = 0; gi < n; ++gi) {
    RecordGroupMeta g;
    g.row_begin = r.get<std::uint64_t>();
    g.row_end = r.get<std::uint64_t>();
    if (g.row_begin != expect_begin || g.row_end <= g.row_begin) r.raise("record groups not contiguous");
    expect_begin = g.row_end;
    const auto nb = r.get<std::uint32_t>();
    if (nb > r.remaining() / 4) r.raise("block count exceeds section");
    std::uint64_t sum = 0;
    for (std::uint32_t i = 0; i < nb; ++i) {
      g.block_rows.push_back(r.get<std::uint32_t>());
      sum += g.block_rows.back();
    }
    if (sum != g.row_count()) r.raise("block rows disagree with group row range");
    const auto np = r.get<std::uint32_t>();
    if (np > r.remaining() / 8) r.raise("partition count exceeds section");
    for (std::uint32_t pi = 0; pi < np; ++pi) {
      ColumnPartitionMeta p;
      p.column_id = r.get<std::uint32_t>();
      const auto blocks = r.get<std::uint32_t>();
      if (blocks != nb) r.raise("partition block count disagrees with group");
      for (std::uint32_t bi = 0; bi < blocks; ++bi) {
        DataBlockRef b;
        b.file_offset = r.get<std::uint64_t>();
        b.byte_length = r.get<std::uint32_t>();
        const auto codec = r.get<std::uint8_t>();
        if (!enc::is_valid_codec(codec)) r.raise("unknown codec id " + std::to_string(codec));
        b.codec = static_cast<enc::CodecId>(codec);
        b.row_count = r.get<std::uint32_t>();
        b.crc = r.get<std::uint32_t>();
        if (b.row_count != g.block_rows[bi]) r.raise("block row count disagrees with group");
        const auto data_end = kMagic.size() + layout.footer.data_length;
        if (b.file_offset < kMagic.size() || b.file_offset + b.byte_length > data_end || b.byte_length == 0) {
          r.raise("block outside data region");
        }
        p.blocks.push_back(b);
      }
      g.partitions.push_back(std::move(p));
    }
    layout.record_groups.push_back(std::move(g));
  }
  if (expect_begin != layout.footer.total_rows) r.raise("group rows disagree with footer total");
}

Bytes encode_sort_key(const FileLayout& layout) {
  ByteWriter w;
  put_ids(w, layout.schema.sort_key);
  w.put(static_cast<std::uint32_t>(layout.record_groups.size()));
  for (const auto& g : layout.record_groups) {
    write_row(w, g.sort_key_min);
    write_row(w, g.sort_key_max);
    w.put(static_cast<std::uint32_t>(g.block_first_keys.size()));
    for (std::size_t i = 0; i < g.block_first_keys.size(); ++i) {
      write_row(w, g.block_first_keys[i]);
      write_row(w, g.block_last_keys[i]);
    }
  }
  return w.take();
}

std::vector<std::uint32_t> decode_sort_key(ByteSpan section, FileLayout& layout) {
  auto r = open_section(section, Region::SortKey);
  auto ids = get_ids(r);
  const auto n = r.get<std::uint32_t>();
  check_groups(r, layout, n);
  for (std::uint32_t gi = 0; gi < n; ++gi) {
    auto& g = layout.record_groups.at(gi);
    g.sort_key_min = read_row(r);
    g.sort_key_max = read_row(r);
    const auto nb = r.get<std::uint32_t>();
    if (!ids.empty() && nb != g.block_rows.size()) r.raise("first-key samples disagree with block count");
    g.block_first_keys.clear();
    g.block_last_keys.clear();
    for (std::uint32_t i = 0; i < nb; ++i) {
      g.block_first_keys.push_back(read_row(r));
      g.block_last_keys.push_back(read_row(r));
    }
  }
  return ids;
}

Bytes encode_stats(const FileLayout& layout) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(layout.record_groups.size()));
  for (const auto& g : layout.record_groups) {
    w.put(static_cast<std::uint32_t>(g.partitions.size()));
    for (const auto& p : g.partitions) {
      w.put(p.column_id);
      write_value(w, p.stats.min);
      write_value(w, p.stats.max);
      w.put(p.stats.null_count);
    }
  }
  return w.take();
}

void decode_stats(ByteSpan section, FileLayout& layout) {
  auto r = open_section(section, Region::Stats);
  const auto n = r.get<std::uint32_t>();
  check_groups(r, layout, n);
  for (std::uint32_t gi = 0; gi < n; ++gi) {
    auto& g = layout.record_groups.at(gi);
    const auto np = r.get<std::uint32_t>();
    if (np != g.partitions.size()) r.raise("stats partition count disagrees with layout");
    for (auto& p : g.partitions) {
      if (r.get<std::uint32_t>() != p.column_id) r.raise("stats column id disagrees with layout");
      p.stats.min = read_value(r);
      p.stats.max = read_value(r);
      p.stats.null_count = r.get<std::uint64_t>();
      if (p.stats.null_count > g.row_count()) r.raise("null count exceeds rows");
    }
  }
}

Bytes encode_bloom(const FileLayout& layout) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(layout.record_groups.size()));
  for (const auto& g : layout.record_groups) {
    w.put(static_cast<std::uint32_t>(g.partitions.size()));
    for (const auto& p : g.partitions) {
      w.put(p.column_id);
      w.put<std::uint8_t>(p.bloom ? 1 : 0);
      if (p.bloom) p.bloom->serialize(w);
    }
  }
  return w.take();
}

void decode_bloom(ByteSpan section, FileLayout& layout) {
  auto r = open_section(section, Region::Bloom);
  const auto n = r.get<std::uint32_t>();
  check_groups(r, layout, n);
  for (std::uint32_t gi = 0; gi < n; ++gi) {
    auto& g = layout.record_groups.at(gi);
    const auto np = r.get<std::uint32_t>();
    if (np != g.partitions.size()) r.raise("bloom partition count disagrees with layout");
    for (auto& p : g.partitions) {
      if (r.get<std::uint32_t>() != p.column_id) r.raise("bloom column id disagrees with layout");
      if (r.get<std::uint8_t>()) p.bloom = BloomFilter::deserialize(r);
    }
  }
}

Bytes encode_schema(const Schema& schema) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(schema.columns.size()));
  for (const auto& c : schema.columns) {
    w.put_string(c.name);
    w.put(static_cast<std::uint8_t>(c.type));
    w.put<std::uint8_t>(c.nullable ? 1 : 0);
    w.put<std::uint8_t>(c.encoding ? 1 : 0);
    w.put(static_cast<std::uint8_t>(c.encoding.value_or(enc::CodecId::Plain)));
  }
  put_ids(w, schema.sort_key);
  put_ids(w, schema.primary_key);
  return w.take();
}

void decode_schema(ByteSpan section, FileLayout& layout) {
  auto r = open_section(section, Region::Schema);
  Schema s;
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining() / 8) r.raise("column count exceeds section");
  for (std::uint32_t i = 0; i < n; ++i) {
    ColumnSchema c;
    c.name = r.get_string();
    const auto type = r.get<std::uint8_t>();
    if (type < 1 || type > 4) r.raise("unknown column type " + std::to_string(type));
    c.type = static_cast<ColumnType>(type);
    c.nullable = r.get<std::uint8_t>() != 0;
    const bool has_enc = r.get<std::uint8_t>() != 0;
    const auto codec = r.get<std::uint8_t>();
    if (has_enc) {
      if (!enc::is_valid_codec(codec)) r.raise("unknown codec id");
      c.encoding = static_cast<enc::CodecId>(codec);
    }
    s.columns.push_back(std::move(c));
  }
  s.sort_key = get_ids(r);
  s.primary_key = get_ids(r);
  try {
    s.validate();
  } catch (const Error& e) {
    r.raise(e.what());
  }
  layout.schema = std::move(s);
}

}  // namespace minihouse::snf::detail
