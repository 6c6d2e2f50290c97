#include <algorithm>
#include <unordered_set>

#include "minihouse/common/checksum.hpp"
#include "minihouse/encodings/vectors.hpp"
#include "minihouse/format/sniffer.hpp"
#include "sniffer_internal.hpp"

namespace minihouse::snf {

std::string_view to_string(Region r) noexcept {
  switch (r) {
    case Region::Data: return "data";
    case Region::LayoutIndex: return "layout_index";
    case Region::SortKey: return "sort_key";
    case Region::Stats: return "stats";
    case Region::Bloom: return "bloom";
    case Region::Schema: return "schema";
  }
  return "?";
}

std::optional<std::uint32_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return static_cast<std::uint32_t>(i);
  }
  return std::nullopt;
}

std::uint32_t Schema::require(std::string_view name) const {
  auto id = find(name);
  if (!id) fail(ErrorCode::UnknownColumn, "no column named '" + std::string(name) + "'");
  return *id;
}

void Schema::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) fail(ErrorCode::SchemaMismatch, "empty column name");
    if (!seen.insert(c.name).second) fail(ErrorCode::SchemaMismatch, "duplicate column '" + c.name + "'");
    if (c.encoding && c.type != ColumnType::Vector) {
      auto allowed = enc::candidate_codecs(c.type);
      if (std::find(allowed.begin(), allowed.end(), *c.encoding) == allowed.end()) {
        fail(ErrorCode::SchemaMismatch, "codec " + std::string(enc::to_string(*c.encoding)) + " invalid for column '" + c.name + "'");
      }
    }
  }
  for (const auto* key : {&sort_key, &primary_key}) {
    for (auto id : *key) {
      if (id >= columns.size()) fail(ErrorCode::SchemaMismatch, "key column id out of range");
      if (columns[id].type == ColumnType::Vector) fail(ErrorCode::SchemaMismatch, "vector column in key");
    }
  }
}

namespace detail {

Row key_of(const std::vector<ColumnData>& columns, const std::vector<std::uint32_t>& key_cols, std::size_t row) {
  Row k;
  k.reserve(key_cols.size());
  for (auto c : key_cols) k.push_back(columns[c][row]);
  return k;
}

void write_section(ByteWriter& w, Region tag, const Bytes& body) {
  w.put(static_cast<std::uint16_t>(tag));
  w.put(kSectionVersion);
  w.put(static_cast<std::uint32_t>(body.size()));
  w.put_bytes(ByteSpan(body));
}

}  // namespace detail

namespace {

Bytes encode_column_block(const ColumnData& col, std::size_t begin, std::size_t end, const ColumnSchema& schema,
                          std::optional<enc::CodecId> forced, enc::CodecId& used) {
  const auto rows = static_cast<std::uint32_t>(end - begin);
  ByteWriter w;
  if (schema.type == ColumnType::Vector) {
    enc::OptionalVectors vecs;
    vecs.reserve(rows);
    for (std::size_t i = begin; i < end; ++i) {
      if (is_null(col[i])) vecs.emplace_back(std::nullopt);
      else vecs.emplace_back(std::get<FloatVector>(col[i]));
    }
    used = enc::CodecId::Plain;
    w.put(static_cast<std::uint8_t>(used));
    w.put(rows);
    w.put<std::uint8_t>(0);
    w.put_bytes(ByteSpan(enc::serialize_lp(enc::encode_vectors_lp(vecs))));
    return w.take();
  }

  enc::TypedValues values = enc::empty_values(schema.type);
  Bytes validity((rows + 7) / 8, 0);
  bool has_nulls = false;
  std::visit(
      [&](auto& out) {
        using T = typename std::decay_t<decltype(out)>::value_type;
        for (std::size_t i = begin; i < end; ++i) {
          if (is_null(col[i])) {
            has_nulls = true;
            continue;
          }
          validity[(i - begin) >> 3] |= static_cast<std::uint8_t>(1u << ((i - begin) & 7));
          out.push_back(std::get<T>(col[i]));
        }
      },
      values);

  enc::CodecId codec = enc::CodecId::Plain;
  if (forced.has_value()) codec = forced.value();
  else codec = enc::choose_encoding(schema.type, enc::head_sample(values)).codec;
  enc::EncodedBlock block;
  try {
    block = enc::encode_block(codec, values);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ValueOutOfCodecRange) throw;
    block = enc::encode_block(enc::CodecId::Plain, values);
  }
  used = block.codec;
  w.put(static_cast<std::uint8_t>(block.codec));
  w.put(rows);
  w.put<std::uint8_t>(has_nulls ? 1 : 0);
  if (has_nulls) w.put_bytes(ByteSpan(validity));
  w.put_bytes(ByteSpan(block.payload));
  return w.take();
}

ColumnStats compute_stats(const ColumnData& col, std::size_t begin, std::size_t end, ColumnType type) {
  ColumnStats s;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& v = col[i];
    if (is_null(v)) {
      ++s.null_count;
      continue;
    }
    if (type == ColumnType::Vector) continue;
    if (is_null(s.min) || compare_values(v, s.min) < 0) s.min = v;
    if (is_null(s.max) || compare_values(v, s.max) > 0) s.max = v;
  }
  return s;
}

void check_input(const std::vector<ColumnData>& columns, const Schema& schema) {
  schema.validate();
  if (columns.size() != schema.columns.size()) {
    fail(ErrorCode::SchemaMismatch, "expected " + std::to_string(schema.columns.size()) + " columns, got " +
                                        std::to_string(columns.size()));
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() != columns[0].size()) fail(ErrorCode::SchemaMismatch, "columns differ in length");
    const auto& cs = schema.columns[c];
    for (const auto& v : columns[c]) {
      if (is_null(v)) {
        if (!cs.nullable) fail(ErrorCode::SchemaMismatch, "NULL in non-nullable column '" + cs.name + "'");
      } else if (type_of(v) != cs.type) {
        fail(ErrorCode::SchemaMismatch, "value of wrong type in column '" + cs.name + "'");
      }
    }
  }
  if (!schema.sort_key.empty() && !columns.empty()) {
    Row prev;
    for (std::size_t r = 0; r < columns[0].size(); ++r) {
      Row k = detail::key_of(columns, schema.sort_key, r);
      if (r > 0 && compare_rows(prev, k) > 0) {
        fail(ErrorCode::SortViolation, "row " + std::to_string(r) + " sorts before its predecessor");
      }
      prev = std::move(k);
    }
  }
}

}  // namespace

WriteResult write_file(const std::vector<ColumnData>& columns, const Schema& schema, const WriteOptions& options) {
  if (options.group_target_rows == 0) fail(ErrorCode::InvalidConfig, "group_target_rows must be positive");
  check_input(columns, schema);

  const std::size_t total = columns.empty() ? 0 : columns[0].size();
  const bool sorted = !schema.sort_key.empty();
  WriteResult result;
  auto& layout = result.layout;
  layout.schema = schema;
  ByteWriter w(result.bytes);
  w.put_bytes(ByteSpan(kMagic));

  for (std::size_t gb = 0; gb < total; gb += options.group_target_rows) {
    const std::size_t ge = std::min<std::size_t>(total, gb + options.group_target_rows);
    RecordGroupMeta g;
    g.row_begin = gb;
    g.row_end = ge;
    const std::size_t step = options.block_target_rows ? options.block_target_rows : ge - gb;
    for (std::size_t b = gb; b < ge; b += step) {
      g.block_rows.push_back(static_cast<std::uint32_t>(std::min(ge, b + step) - b));
      if (sorted) {
        g.block_first_keys.push_back(detail::key_of(columns, schema.sort_key, b));
        g.block_last_keys.push_back(detail::key_of(columns, schema.sort_key, std::min(ge, b + step) - 1));
      }
    }
    if (sorted) {
      g.sort_key_min = detail::key_of(columns, schema.sort_key, gb);
      g.sort_key_max = detail::key_of(columns, schema.sort_key, ge - 1);
    }
    for (std::uint32_t c = 0; c < columns.size(); ++c) {
      const auto& cs = schema.columns[c];
      ColumnPartitionMeta p;
      p.column_id = c;
      std::optional<enc::CodecId> forced = cs.encoding;
      if (auto it = options.codec_overrides.find(c); it != options.codec_overrides.end()) forced = it->second;
      if (cs.type == ColumnType::Vector) forced.reset();
      std::size_t b = gb;
      for (auto rows : g.block_rows) {
        DataBlockRef ref;
        Bytes block = encode_column_block(columns[c], b, b + rows, cs, forced, ref.codec);
        ref.file_offset = w.size();
        ref.byte_length = static_cast<std::uint32_t>(block.size());
        ref.row_count = rows;
        ref.crc = crc32c(ByteSpan(block));
        w.put_bytes(ByteSpan(block));
        p.blocks.push_back(ref);
        b += rows;
      }
      p.stats = compute_stats(columns[c], gb, ge, cs.type);
      if (options.build_bloom && (cs.type == ColumnType::Int64 || cs.type == ColumnType::String) &&
          p.stats.null_count < ge - gb) {
        auto bloom = BloomFilter::with_bits_per_key(ge - gb - p.stats.null_count, options.bloom_bits_per_key,
                                                    options.bloom_hashes);
        for (std::size_t i = gb; i < ge; ++i) {
          if (!is_null(columns[c][i])) bloom.insert(hash_value(columns[c][i]));
        }
        p.bloom = std::move(bloom);
      }
      g.partitions.push_back(std::move(p));
    }
    layout.record_groups.push_back(std::move(g));
  }

  auto& f = layout.footer;
  f.data_length = w.size() - kMagic.size();
  f.data_crc = crc32c(ByteSpan(result.bytes).subspan(kMagic.size()));
  f.total_rows = total;
  f.num_groups = static_cast<std::uint32_t>(layout.record_groups.size());

  const std::array<Bytes, kDescriptorCount> bodies = {
      detail::encode_layout_index(layout), detail::encode_sort_key(layout), detail::encode_stats(layout),
      detail::encode_bloom(layout), detail::encode_schema(layout.schema)};
  for (std::size_t i = 0; i < kDescriptorCount; ++i) {
    const auto start = w.size();
    detail::write_section(w, static_cast<Region>(i + 1), bodies[i]);
    f.descriptors[i] = {start, static_cast<std::uint32_t>(w.size() - start)};
    f.descriptor_crcs[i] = crc32c(ByteSpan(result.bytes).subspan(start));
  }
  w.put_bytes(ByteSpan(encode_footer(f)));
  return result;
}

}  // namespace minihouse::snf
