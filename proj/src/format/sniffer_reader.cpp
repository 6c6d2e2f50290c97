#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "minihouse/common/checksum.hpp"
#include "minihouse/encodings/vectors.hpp"
#include "minihouse/format/sniffer.hpp"
#include "sniffer_internal.hpp"

namespace minihouse::snf {

// Footer layout (128 bytes):
//   0 magic, 4 u16 version, 6 u16 reserved, 8 u64 data_length,
//   16 five (u64 offset, u32 length) descriptor refs, 76 u32 data crc,
//   80 five u32 descriptor crcs, 100 u64 total_rows, 108 u32 num_groups,
//   112 reserved, 124 u32 crc over bytes [0, 124).
Bytes encode_footer(const Footer& f) {
  ByteWriter w;
  w.put_bytes(ByteSpan(kMagic));
  w.put(f.version);
  w.put<std::uint16_t>(0);
  w.put(f.data_length);
  for (const auto& d : f.descriptors) {
    w.put(d.offset);
    w.put(d.length);
  }
  w.put(f.data_crc);
  for (auto c : f.descriptor_crcs) w.put(c);
  w.put(f.total_rows);
  w.put(f.num_groups);
  while (w.size() < kFooterSize - 4) w.put<std::uint8_t>(0);
  w.put(crc32c(ByteSpan(w.buf())));
  return w.take();
}

Footer decode_footer(ByteSpan bytes) {
  if (bytes.size() != kFooterSize) fail(ErrorCode::BadMagic, "footer must be 128 bytes");
  ByteReader r(bytes, ErrorCode::FooterChecksumMismatch);
  const std::uint32_t stored = [&] {
    ByteReader tail(bytes.subspan(kFooterSize - 4));
    return tail.get<std::uint32_t>();
  }();
  if (crc32c(bytes.first(kFooterSize - 4)) != stored) fail(ErrorCode::FooterChecksumMismatch, "footer crc");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) fail(ErrorCode::BadMagic, "footer magic");
  r.skip(4);
  Footer f;
  f.version = r.get<std::uint16_t>();
  if (f.version != kFormatVersion) {
    fail(ErrorCode::UnsupportedVersion, "format version " + std::to_string(f.version));
  }
  r.skip(2);
  f.data_length = r.get<std::uint64_t>();
  for (auto& d : f.descriptors) {
    d.offset = r.get<std::uint64_t>();
    d.length = r.get<std::uint32_t>();
  }
  f.data_crc = r.get<std::uint32_t>();
  for (auto& c : f.descriptor_crcs) c = r.get<std::uint32_t>();
  f.total_rows = r.get<std::uint64_t>();
  f.num_groups = r.get<std::uint32_t>();
  return f;
}

bool IntegrityReport::all_ok() const noexcept {
  return std::all_of(regions.begin(), regions.end(), [](const auto& s) { return s.ok; });
}

bool IntegrityReport::is_ok(Region r) const noexcept {
  for (const auto& s : regions) {
    if (s.region == r) return s.ok;
  }
  return false;
}

std::shared_ptr<FileHandle> FileHandle::open(Bytes bytes, OpenOptions options) {
  if (bytes.size() < kMagic.size() + kFooterSize) fail(ErrorCode::BadMagic, "file too short");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) fail(ErrorCode::BadMagic, "head magic");

  std::shared_ptr<FileHandle> h(new FileHandle());
  h->bytes_ = std::move(bytes);
  h->options_ = options;
  auto& layout = h->layout_;
  const ByteSpan all(h->bytes_);
  layout.footer = decode_footer(all.last(kFooterSize));
  h->metadata_reads_ = 1;

  const auto& f = layout.footer;
  const std::uint64_t footer_at = all.size() - kFooterSize;
  const std::uint64_t data_end = kMagic.size() + f.data_length;
  if (f.data_length > footer_at - kMagic.size()) fail(ErrorCode::MalformedDescriptor, "data region past footer");
  for (const auto& d : f.descriptors) {
    if (d.offset < data_end || d.offset + d.length > footer_at || d.length < detail::kSectionHeader) {
      fail(ErrorCode::MalformedDescriptor, "descriptor outside descriptor region");
    }
  }

  // The descriptor region is contiguous, so it is fetched with one read.
  ++h->metadata_reads_;
  for (std::size_t i = 0; i < kDescriptorCount; ++i) {
    h->descriptor_ok_[i] = crc32c(h->region_bytes(static_cast<Region>(i + 1))) == f.descriptor_crcs[i];
  }
  auto ok = [&](Region r) { return h->descriptor_ok_[static_cast<std::size_t>(r) - 1]; };

  if (ok(Region::Schema)) detail::decode_schema(h->region_bytes(Region::Schema), layout);
  if (ok(Region::LayoutIndex)) {
    detail::decode_layout_index(h->region_bytes(Region::LayoutIndex), layout);
    if (ok(Region::Schema)) {
      for (const auto& g : layout.record_groups) {
        if (g.partitions.size() != layout.schema.columns.size()) {
          fail(ErrorCode::MalformedDescriptor, "partition count disagrees with schema");
        }
        for (std::uint32_t c = 0; c < g.partitions.size(); ++c) {
          if (g.partitions[c].column_id != c) fail(ErrorCode::MalformedDescriptor, "partition order");
        }
      }
    }
    if (ok(Region::SortKey)) {
      auto ids = detail::decode_sort_key(h->region_bytes(Region::SortKey), layout);
      if (ok(Region::Schema) && ids != layout.schema.sort_key) {
        fail(ErrorCode::MalformedDescriptor, "sort key columns disagree with schema");
      }
    }
    if (ok(Region::Stats)) detail::decode_stats(h->region_bytes(Region::Stats), layout);
    if (ok(Region::Bloom)) detail::decode_bloom(h->region_bytes(Region::Bloom), layout);
  }
  return h;
}

std::shared_ptr<FileHandle> FileHandle::open_path(const std::filesystem::path& path, OpenOptions options) {
  return open(read_file_bytes(path), options);
}

ByteSpan FileHandle::region_bytes(Region r) const {
  const ByteSpan all(bytes_);
  if (r == Region::Data) return all.subspan(kMagic.size(), layout_.footer.data_length);
  const auto& d = layout_.footer.descriptors[static_cast<std::size_t>(r) - 1];
  return all.subspan(d.offset, d.length);
}

bool FileHandle::descriptor_ok(Region r) const noexcept {
  if (r == Region::Data) return true;
  return descriptor_ok_[static_cast<std::size_t>(r) - 1];
}

void FileHandle::require(Region r) const {
  if (!descriptor_ok(r)) fail(ErrorCode::DescriptorCorrupt, std::string(to_string(r)) + " descriptor failed its crc");
}

const Schema& FileHandle::schema() const {
  require(Region::Schema);
  return layout_.schema;
}

const std::vector<RecordGroupMeta>& FileHandle::groups() const {
  require(Region::LayoutIndex);
  return layout_.record_groups;
}

const FileLayout& FileHandle::layout() const {
  for (std::size_t i = 1; i <= kDescriptorCount; ++i) require(static_cast<Region>(i));
  return layout_;
}

std::vector<std::uint32_t> FileHandle::all_columns() const {
  std::vector<std::uint32_t> ids(schema().columns.size());
  for (std::uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

IoCounters FileHandle::io() const noexcept {
  return {metadata_reads_.load(), data_block_reads_.load(), data_bytes_read_.load()};
}

void FileHandle::reset_io() noexcept {
  metadata_reads_ = 0;
  data_block_reads_ = 0;
  data_bytes_read_ = 0;
}

IntegrityReport FileHandle::verify_integrity() const {
  IntegrityReport rep;
  rep.regions.push_back({Region::Data, crc32c(region_bytes(Region::Data)) == layout_.footer.data_crc});
  for (std::size_t i = 0; i < kDescriptorCount; ++i) {
    const auto r = static_cast<Region>(i + 1);
    rep.regions.push_back({r, crc32c(region_bytes(r)) == layout_.footer.descriptor_crcs[i]});
  }
  return rep;
}

namespace {

int compare_prefix(const Row& row, const Row& key) {
  const std::size_t n = std::min(row.size(), key.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int c = compare_values(row[i], key[i]);
    if (c != 0) return c;
  }
  return 0;
}

// Literal converted to the column's storage type for a bloom probe; nullopt when no
// stored value can equal it or the conversion is not exact.
std::optional<Value> bloom_probe(const Value& lit, ColumnType type) {
  if (type == ColumnType::Int64) {
    if (lit.index() == 1) return lit;
    if (lit.index() == 2) {
      const double d = std::get<2>(lit);
      if (std::trunc(d) == d && d >= -9223372036854775808.0 && d < 9223372036854775808.0) {
        return Value(static_cast<std::int64_t>(d));
      }
    }
    return std::nullopt;
  }
  if (type == ColumnType::String && lit.index() == 3) return lit;
  return std::nullopt;
}

bool may_match(const ColumnPartitionMeta& p, std::uint64_t rows, ColumnType type, const Comparison& cmp,
               bool use_bloom) {
  if (is_null(cmp.literal)) return false;
  if (p.stats.null_count >= rows) return false;
  if (type == ColumnType::Vector || is_null(p.stats.min)) return true;
  const auto cmin = sql_compare(p.stats.min, cmp.literal);
  const auto cmax = sql_compare(p.stats.max, cmp.literal);
  if (!cmin || !cmax) return false;
  switch (cmp.op) {
    case CmpOp::Eq: {
      if (*cmin > 0 || *cmax < 0) return false;
      if (!use_bloom || !p.bloom) return true;
      auto probe = bloom_probe(cmp.literal, type);
      if (!probe) return type == ColumnType::Float64;
      return p.bloom->may_contain(hash_value(*probe));
    }
    case CmpOp::Ne: return !(*cmin == 0 && *cmax == 0);
    case CmpOp::Lt: return *cmin < 0;
    case CmpOp::Le: return *cmin <= 0;
    case CmpOp::Gt: return *cmax > 0;
    case CmpOp::Ge: return *cmax >= 0;
  }
  return true;
}

}  // namespace

std::vector<LocateHit> FileHandle::locate_key(const Row& key, const std::vector<std::uint32_t>& projection) const {
  const auto& s = schema();
  if (s.sort_key.empty()) fail(ErrorCode::NoSortKey, "file declares no sort key");
  require(Region::SortKey);
  const auto& gs = groups();
  if (key.empty() || key.size() > s.sort_key.size()) {
    fail(ErrorCode::SchemaMismatch, "lookup key arity " + std::to_string(key.size()));
  }
  for (auto c : projection) {
    if (c >= s.columns.size()) fail(ErrorCode::UnknownColumn, "projected column id " + std::to_string(c));
  }

  std::vector<LocateHit> hits;
  auto first = std::partition_point(gs.begin(), gs.end(),
                                    [&](const RecordGroupMeta& g) { return compare_prefix(g.sort_key_max, key) < 0; });
  for (auto it = first; it != gs.end() && compare_prefix(it->sort_key_min, key) <= 0; ++it) {
    const auto& fk = it->block_first_keys;
    const auto& lk = it->block_last_keys;
    // Blocks with first <= key <= last; both sequences are sorted.
    const auto hi = std::partition_point(fk.begin(), fk.end(), [&](const Row& r) { return compare_prefix(r, key) <= 0; });
    const auto lo = fk.begin() + (std::partition_point(lk.begin(), lk.end(), [&](const Row& r) { return compare_prefix(r, key) < 0; }) - lk.begin());
    for (auto b = lo; b < hi; ++b) {
      LocateHit hit;
      hit.group_id = static_cast<std::uint32_t>(it - gs.begin());
      hit.block_index = static_cast<std::uint32_t>(b - fk.begin());
      for (auto c : projection) hit.blocks.push_back(it->partitions[c].blocks[hit.block_index]);
      hits.push_back(std::move(hit));
    }
  }
  return hits;
}

std::vector<std::uint32_t> FileHandle::prune(const Comparison& cmp) const {
  return prune(Predicate{cmp});
}

std::vector<std::uint32_t> FileHandle::prune(const Predicate& conj) const {
  const auto& s = schema();
  const auto& gs = groups();
  std::vector<std::uint32_t> ids;
  ids.reserve(conj.size());
  for (const auto& c : conj) ids.push_back(s.require(c.column));
  if (!conj.empty()) require(Region::Stats);
  const bool use_bloom = descriptor_ok(Region::Bloom);
  std::vector<std::uint32_t> out;
  for (std::uint32_t g = 0; g < gs.size(); ++g) {
    bool keep = true;
    for (std::size_t i = 0; i < conj.size() && keep; ++i) {
      keep = may_match(gs[g].partitions[ids[i]], gs[g].row_count(), s.columns[ids[i]].type, conj[i], use_bloom);
    }
    if (keep) out.push_back(g);
  }
  return out;
}

ColumnData FileHandle::read_block(const DataBlockRef& ref, ColumnType type) const {
  const std::uint64_t data_end = kMagic.size() + layout_.footer.data_length;
  if (ref.file_offset < kMagic.size() || ref.byte_length == 0 || ref.file_offset > data_end ||
      ref.byte_length > data_end - ref.file_offset) {
    fail(ErrorCode::OutOfRange, "block ref outside data region");
  }
  const ByteSpan raw = ByteSpan(bytes_).subspan(ref.file_offset, ref.byte_length);
  ++data_block_reads_;
  data_bytes_read_ += ref.byte_length;
  if (options_.verify_block_crc && crc32c(raw) != ref.crc) {
    fail(ErrorCode::BlockChecksumMismatch, "block at offset " + std::to_string(ref.file_offset));
  }

  ByteReader r(raw);
  const auto codec_raw = r.get<std::uint8_t>();
  if (codec_raw != static_cast<std::uint8_t>(ref.codec)) fail(ErrorCode::CodecMismatch, "block codec disagrees with ref");
  const auto codec = static_cast<enc::CodecId>(codec_raw);
  const auto rows = r.get<std::uint32_t>();
  if (rows != ref.row_count) r.raise("block row count disagrees with ref");
  const bool has_nulls = r.get<std::uint8_t>() != 0;

  ColumnData out;
  out.reserve(rows);
  if (type == ColumnType::Vector) {
    if (codec != enc::CodecId::Plain || has_nulls) fail(ErrorCode::CodecMismatch, "vector block must be PLAIN L&P");
    auto col = enc::deserialize_lp(raw.subspan(r.position()));
    if (col.row_count() != rows) r.raise("L&P row count disagrees with block");
    for (auto& v : enc::decode_vectors_lp(col)) {
      if (v) out.emplace_back(std::move(*v));
      else out.emplace_back(std::monostate{});
    }
    return out;
  }

  auto allowed = enc::candidate_codecs(type);
  if (std::find(allowed.begin(), allowed.end(), codec) == allowed.end()) {
    fail(ErrorCode::CodecMismatch, std::string(enc::to_string(codec)) + " cannot hold " + std::string(to_string(type)));
  }
  std::vector<bool> valid(rows, true);
  std::uint32_t present = rows;
  if (has_nulls) {
    auto bitmap = r.get_bytes((rows + 7) / 8);
    present = 0;
    for (std::uint32_t i = 0; i < rows; ++i) {
      valid[i] = (bitmap[i >> 3] >> (i & 7)) & 1u;
      present += valid[i];
    }
  }
  enc::EncodedBlock block;
  block.codec = codec;
  block.type = type;
  block.row_count = present;
  auto payload = r.get_bytes(r.remaining());
  block.payload.assign(payload.begin(), payload.end());
  auto values = enc::decode_block(block);
  std::visit(
      [&](auto& vals) {
        std::size_t k = 0;
        for (std::uint32_t i = 0; i < rows; ++i) {
          if (valid[i]) out.emplace_back(std::move(vals[k++]));
          else out.emplace_back(std::monostate{});
        }
      },
      values);
  return out;
}

ColumnData FileHandle::read_column(std::uint32_t group, std::uint32_t column) const {
  const auto& gs = groups();
  const auto& s = schema();
  if (group >= gs.size()) fail(ErrorCode::OutOfRange, "group " + std::to_string(group));
  if (column >= s.columns.size()) fail(ErrorCode::UnknownColumn, "column id " + std::to_string(column));
  ColumnData out;
  for (const auto& ref : gs[group].partitions[column].blocks) {
    auto part = read_block(ref, s.columns[column].type);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<Row> FileHandle::read_group(std::uint32_t group, const std::vector<std::uint32_t>& projection) const {
  const auto n = groups().at(group).row_count();
  std::vector<Row> rows(n, Row(projection.size()));
  for (std::size_t p = 0; p < projection.size(); ++p) {
    auto col = read_column(group, projection[p]);
    for (std::size_t i = 0; i < n; ++i) rows[i][p] = std::move(col[i]);
  }
  return rows;
}

std::vector<Row> FileHandle::read_all(const std::vector<std::uint32_t>& projection) const {
  std::vector<Row> out;
  for (std::uint32_t g = 0; g < groups().size(); ++g) {
    auto rows = read_group(g, projection);
    out.insert(out.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return out;
}

void write_bytes_atomic(const std::filesystem::path& path, ByteSpan bytes) {
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) fail(ErrorCode::IoError, "cannot create " + tmp.string());
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n <= 0) {
      ::close(fd);
      fail(ErrorCode::IoError, "write failed: " + tmp.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

}  // namespace minihouse::snf
