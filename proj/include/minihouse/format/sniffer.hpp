#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "minihouse/common/bloom.hpp"
#include "minihouse/common/bytes.hpp"
#include "minihouse/common/predicate.hpp"
#include "minihouse/common/value.hpp"
#include "minihouse/encodings/codec.hpp"

namespace minihouse::snf {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'N', 'F', '1'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kFooterSize = 128;
inline constexpr std::uint32_t kDefaultGroupRows = 8192;

enum class Region : std::uint8_t { Data = 0, LayoutIndex, SortKey, Stats, Bloom, Schema };
inline constexpr std::size_t kDescriptorCount = 5;
std::string_view to_string(Region r) noexcept;

struct ColumnSchema {
  std::string name;
  ColumnType type = ColumnType::Int64;
  bool nullable = true;
  std::optional<enc::CodecId> encoding;  // fixed codec; automatic selection when empty

  bool operator==(const ColumnSchema&) const = default;
};

struct Schema {
  std::vector<ColumnSchema> columns;
  std::vector<std::uint32_t> sort_key;
  std::vector<std::uint32_t> primary_key;

  std::optional<std::uint32_t> find(std::string_view name) const;
  std::uint32_t require(std::string_view name) const;  // UnknownColumn when absent
  void validate() const;                                // SchemaMismatch on duplicates or bad key ids
  bool operator==(const Schema&) const = default;
};

struct DataBlockRef {
  std::uint64_t file_offset = 0;
  std::uint32_t byte_length = 0;
  enc::CodecId codec = enc::CodecId::Plain;
  std::uint32_t row_count = 0;
  std::uint32_t crc = 0;
};

struct ColumnStats {
  Value min;  // NULL when the partition holds no comparable values
  Value max;
  std::uint64_t null_count = 0;
};

struct ColumnPartitionMeta {
  std::uint32_t column_id = 0;
  std::vector<DataBlockRef> blocks;
  ColumnStats stats;
  std::optional<BloomFilter> bloom;
};

struct RecordGroupMeta {
  std::uint64_t row_begin = 0;
  std::uint64_t row_end = 0;  // half-open
  Row sort_key_min;
  Row sort_key_max;
  std::vector<Row> block_first_keys;  // one per block; block boundaries are shared by all columns
  std::vector<Row> block_last_keys;
  std::vector<std::uint32_t> block_rows;
  std::vector<ColumnPartitionMeta> partitions;

  std::uint64_t row_count() const noexcept { return row_end - row_begin; }
};

struct RegionRef {
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
};

struct Footer {
  std::uint16_t version = kFormatVersion;
  std::uint64_t data_length = 0;
  std::array<RegionRef, kDescriptorCount> descriptors{};
  std::uint32_t data_crc = 0;
  std::array<std::uint32_t, kDescriptorCount> descriptor_crcs{};
  std::uint64_t total_rows = 0;
  std::uint32_t num_groups = 0;
};

struct FileLayout {
  std::vector<RecordGroupMeta> record_groups;
  Schema schema;
  Footer footer;
};

struct WriteOptions {
  std::uint32_t group_target_rows = kDefaultGroupRows;
  std::uint32_t block_target_rows = 0;  // 0: one block per column partition
  std::map<std::uint32_t, enc::CodecId> codec_overrides;
  double bloom_bits_per_key = 10.0;
  std::uint8_t bloom_hashes = 7;
  bool build_bloom = true;
};

using ColumnData = std::vector<Value>;

struct WriteResult {
  Bytes bytes;
  FileLayout layout;
};

WriteResult write_file(const std::vector<ColumnData>& columns, const Schema& schema, const WriteOptions& options = {});

struct IoCounters {
  std::uint64_t metadata_reads = 0;
  std::uint64_t data_block_reads = 0;
  std::uint64_t data_bytes_read = 0;
};

struct LocateHit {
  std::uint32_t group_id = 0;
  std::uint32_t block_index = 0;
  std::vector<DataBlockRef> blocks;  // one per projected column
};

struct RegionStatus {
  Region region;
  bool ok = true;
};

struct IntegrityReport {
  std::vector<RegionStatus> regions;
  bool all_ok() const noexcept;
  bool is_ok(Region r) const noexcept;
};

struct OpenOptions {
  bool verify_block_crc = true;
};

// An opened file: footer validated, descriptors resident, blocks decoded on demand.
class FileHandle {
 public:
  static std::shared_ptr<FileHandle> open(Bytes bytes, OpenOptions options = {});
  static std::shared_ptr<FileHandle> open_path(const std::filesystem::path& path, OpenOptions options = {});

  const Footer& footer() const noexcept { return layout_.footer; }
  const Schema& schema() const;
  const std::vector<RecordGroupMeta>& groups() const;
  const FileLayout& layout() const;
  std::uint64_t total_rows() const noexcept { return layout_.footer.total_rows; }
  std::size_t file_size() const noexcept { return bytes_.size(); }

  bool descriptor_ok(Region r) const noexcept;

  // Candidate (group, block) pairs that may hold `key`, which may be a prefix of the sort key.
  // Empty when no group can contain it.
  std::vector<LocateHit> locate_key(const Row& key, const std::vector<std::uint32_t>& projection) const;

  // Groups that may contain a row satisfying the comparison.
  std::vector<std::uint32_t> prune(const Comparison& cmp) const;
  std::vector<std::uint32_t> prune(const Predicate& conj) const;

  ColumnData read_block(const DataBlockRef& ref, ColumnType type) const;
  ColumnData read_column(std::uint32_t group, std::uint32_t column) const;
  std::vector<Row> read_group(std::uint32_t group, const std::vector<std::uint32_t>& projection) const;
  std::vector<Row> read_all(const std::vector<std::uint32_t>& projection) const;
  std::vector<std::uint32_t> all_columns() const;

  IntegrityReport verify_integrity() const;

  IoCounters io() const noexcept;
  void reset_io() noexcept;

  ByteSpan raw() const noexcept { return ByteSpan(bytes_); }

 private:
  FileHandle() = default;
  void require(Region r) const;
  ByteSpan region_bytes(Region r) const;

  Bytes bytes_;
  OpenOptions options_;
  FileLayout layout_;
  std::array<bool, kDescriptorCount> descriptor_ok_{};
  mutable std::atomic<std::uint64_t> metadata_reads_{0};
  mutable std::atomic<std::uint64_t> data_block_reads_{0};
  mutable std::atomic<std::uint64_t> data_bytes_read_{0};
};

using FileHandlePtr = std::shared_ptr<FileHandle>;

inline FileHandlePtr open_file(Bytes bytes, OpenOptions options = {}) {
  return FileHandle::open(std::move(bytes), options);
}

// Footer helpers, exposed for corruption tests.
Bytes encode_footer(const Footer& footer);
Footer decode_footer(ByteSpan footer_bytes);

void write_bytes_atomic(const std::filesystem::path& path, ByteSpan bytes);
Bytes read_file_bytes(const std::filesystem::path& path);

}  // namespace minihouse::snf
