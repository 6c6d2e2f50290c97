#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "minihouse/common/predicate.hpp"
#include "minihouse/common/value.hpp"
#include "minihouse/format/sniffer.hpp"

namespace minihouse::engine {

inline constexpr std::string_view kDocumentId = "document_id";
inline constexpr std::string_view kChunkId = "chunk_id";
inline constexpr std::string_view kSeqColumn = "__seq";
inline constexpr std::string_view kVersionColumn = "__version";
inline constexpr std::string_view kTombColumn = "__tomb";

struct RowKey {
  std::int64_t document_id = 0;
  std::int64_t chunk_id = 0;
  auto operator<=>(const RowKey&) const = default;
};

std::string format_key(const RowKey& k);

// User schema; columns 0 and 1 are always document_id and chunk_id (int64, non-null).
struct TableDef {
  std::string name;
  snf::Schema schema;

  static TableDef make(std::string name, std::vector<snf::ColumnSchema> payload_columns);
  void validate() const;
  RowKey key_of(const Row& row) const;
};

// One staged or stored change: a full row image or a tombstone.
struct Entry {
  RowKey key;
  std::uint64_t seq = 0;
  std::uint64_t version = 0;
  bool tomb = false;
  Row row;  // full user row; key columns set, payload NULL for tombstones
};

enum class SegmentKind { Delta, Stable };
std::string_view to_string(SegmentKind k) noexcept;

struct SegmentInfo {
  std::uint64_t id = 0;
  SegmentKind kind = SegmentKind::Delta;
  std::string file;  // relative to <table>/segments
  std::uint64_t min_version = 0;
  std::uint64_t max_version = 0;
  std::uint64_t created_version = 0;  // visible to snapshots >= this
  std::optional<std::uint64_t> retired_version;
  std::uint64_t rows = 0;

  bool visible_at(std::uint64_t snapshot) const noexcept {
    return created_version <= snapshot && (!retired_version || snapshot < *retired_version);
  }
  bool live() const noexcept { return !retired_version.has_value(); }
};

struct FlushPolicy {
  std::uint64_t max_rows = 4096;
  std::int64_t max_age_ms = 10'000;
};

struct TableOptions {
  std::uint32_t segment_group_rows = snf::kDefaultGroupRows;
  bool sync_wal = true;
  std::function<std::int64_t()> clock;  // milliseconds; steady clock when empty
};

struct ScanStats {
  std::uint64_t segments_visited = 0;
  std::uint64_t groups_total = 0;
  std::uint64_t groups_read = 0;
  std::uint64_t blocks_read = 0;
  std::uint64_t rows_read = 0;  // staged entries plus segment rows decoded
};

struct ScanResult {
  std::vector<std::string> columns;
  std::vector<Row> rows;  // ordered by RowKey
  ScanStats stats;
};

// Net change of one key between two snapshots.
struct ChangeRecord {
  RowKey key;
  std::optional<Row> before;
  std::optional<Row> after;
  std::uint64_t before_seq = 0;
  std::uint64_t after_seq = 0;  // tombstone seq when `after` is absent
};

class Table;

class Txn {
 public:
  Txn() = default;
  Txn(Txn&& o) noexcept;
  Txn& operator=(Txn&& o) noexcept;
  Txn(const Txn&) = delete;
  Txn& operator=(const Txn&) = delete;
  ~Txn();

  std::uint64_t id() const noexcept { return id_; }
  bool open() const noexcept { return table_ != nullptr; }

 private:
  friend class Table;
  Table* table_ = nullptr;
  std::uint64_t id_ = 0;
};

class PinnedSnapshot {
 public:
  PinnedSnapshot() = default;
  PinnedSnapshot(PinnedSnapshot&& o) noexcept;
  PinnedSnapshot& operator=(PinnedSnapshot&& o) noexcept;
  PinnedSnapshot(const PinnedSnapshot&) = delete;
  PinnedSnapshot& operator=(const PinnedSnapshot&) = delete;
  ~PinnedSnapshot();

  std::uint64_t version() const noexcept { return version_; }
  void release();

 private:
  friend class Table;
  Table* table_ = nullptr;
  std::uint64_t version_ = 0;
};

class Table {
 public:
  static std::unique_ptr<Table> create(const std::filesystem::path& dir, const TableDef& def, TableOptions options = {});
  static std::unique_ptr<Table> open(const std::filesystem::path& dir, TableOptions options = {});
  ~Table();

  const TableDef& def() const noexcept { return def_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::uint64_t current_version() const;

  // Write path. A second concurrent transaction raises TxnBusy.
  Txn begin_txn();
  void write_row(Txn& txn, const Row& row);
  void write_rows(Txn& txn, const std::vector<Row>& rows);
  void delete_row(Txn& txn, RowKey key);
  std::uint64_t commit(Txn& txn);
  void abort(Txn& txn);

  // Writes committed staged entries as one delta segment when a threshold is reached.
  std::optional<SegmentInfo> flush_staging(const FlushPolicy& policy);
  std::optional<SegmentInfo> flush_now();
  std::size_t staged_rows() const;

  std::optional<Row> point_lookup(std::uint64_t snapshot, RowKey key) const;
  ScanResult scan(std::uint64_t snapshot, const Predicate& pred, const std::vector<std::string>& projection = {}) const;
  std::vector<ChangeRecord> changes(std::uint64_t from, std::uint64_t to) const;
  // Newest live (non-tombstone) entry per key at `snapshot`, in key order.
  std::vector<Entry> visible_entries(std::uint64_t snapshot) const;

  PinnedSnapshot pin();
  PinnedSnapshot pin_at(std::uint64_t version);
  // Pins that survive restarts, keyed by owner name (used by materialized views).
  void set_persistent_pin(const std::string& owner, std::uint64_t version);
  void clear_persistent_pin(const std::string& owner);
  std::optional<std::uint64_t> oldest_pin() const;

  // Deletes retired segment files no pinned snapshot can still read. Returns files removed.
  std::size_t gc();
  std::uint64_t gc_floor() const;

  std::vector<SegmentInfo> segments() const;
  std::vector<SegmentInfo> live_segments(std::optional<SegmentKind> kind = std::nullopt) const;

  // Compaction hooks.
  std::vector<Entry> read_segment(std::uint64_t segment_id) const;
  bool key_in_segments(RowKey key, const std::vector<std::uint64_t>& segment_ids) const;
  SegmentInfo install_merge(const std::vector<std::uint64_t>& inputs, std::vector<Entry> merged);

  snf::FileHandlePtr segment_handle(std::uint64_t segment_id) const;
  const snf::Schema& segment_schema() const noexcept { return segment_schema_; }

 private:
  friend class Txn;
  friend class PinnedSnapshot;
  Table() = default;

  struct Staged {
    std::uint64_t seq;
    std::uint64_t version;
    bool tomb;
    Row row;
    std::int64_t committed_ms;
  };

  void replay_wal();
  void append_wal(const Bytes& record);
  void rewrite_wal();
  void save_manifest() const;
  void load_manifest();
  void release_txn(Txn& txn) noexcept;
  void unpin(std::uint64_t version) noexcept;
  std::int64_t now_ms() const;
  void check_row(const Row& row) const;
  void check_snapshot(std::uint64_t snapshot) const;
  SegmentInfo write_segment(std::vector<Entry> entries, SegmentKind kind, std::uint64_t created_version,
                            std::uint64_t file_version);
  std::optional<SegmentInfo> flush_locked();

  // Newest entry per key visible at `snapshot`; key predicates prune segment groups.
  std::map<RowKey, Entry> resolve(std::uint64_t snapshot, const Predicate& key_pred, ScanStats* stats) const;
  std::optional<Entry> resolve_key(std::uint64_t snapshot, RowKey key) const;
  std::vector<const SegmentInfo*> visible_segments(std::uint64_t snapshot) const;

  std::filesystem::path dir_;
  TableDef def_;
  TableOptions options_;
  snf::Schema segment_schema_;

  mutable std::shared_mutex mu_;
  std::uint64_t version_ = 0;
  std::uint64_t next_seq_ = 1;
  std::uint64_t next_txn_ = 1;
  std::uint64_t next_segment_id_ = 1;
  std::uint64_t flushed_version_ = 0;
  std::uint64_t gc_floor_ = 0;
  std::optional<std::uint64_t> open_txn_;
  std::vector<Entry> open_entries_;
  std::map<RowKey, std::vector<Staged>> staging_;
  std::size_t staged_count_ = 0;
  std::vector<SegmentInfo> segments_;
  mutable std::map<std::uint64_t, snf::FileHandlePtr> handles_;
  mutable std::mutex handles_mu_;
  std::multiset<std::uint64_t> pins_;
  std::map<std::string, std::uint64_t> persistent_pins_;
  int wal_fd_ = -1;
};

// Directory of tables under one root.
class Database {
 public:
  explicit Database(std::filesystem::path root, TableOptions options = {});

  Table& create_table(const TableDef& def);
  Table& table(const std::string& name);  // UnknownTable when absent
  bool has_table(const std::string& name) const;
  std::vector<std::string> table_names() const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  TableOptions options_;
  std::map<std::string, std::unique_ptr<Table>> open_;
};

// Schema <-> JSON text used by manifests and the CLI.
std::string schema_to_json(const snf::Schema& schema);
snf::Schema schema_from_json(const std::string& text);

}  // namespace minihouse::engine
