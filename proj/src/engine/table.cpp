#include "minihouse/engine/table.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <json.hpp>

#include "minihouse/common/checksum.hpp"

namespace minihouse::engine {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint8_t kWalWrite = 1;
constexpr std::uint8_t kWalCommit = 2;
constexpr int kManifestFormat = 1;

bool is_key_column(const std::string& name) { return name == kDocumentId || name == kChunkId; }

std::string codec_name(const std::optional<enc::CodecId>& c) { return c ? std::string(enc::to_string(*c)) : ""; }

}  // namespace

std::string format_key(const RowKey& k) {
  return "(" + std::to_string(k.document_id) + ", " + std::to_string(k.chunk_id) + ")";
}

std::string_view to_string(SegmentKind k) noexcept { return k == SegmentKind::Delta ? "delta" : "stable"; }

TableDef TableDef::make(std::string name, std::vector<snf::ColumnSchema> payload_columns) {
  TableDef d;
  d.name = std::move(name);
  d.schema.columns = {{std::string(kDocumentId), ColumnType::Int64, false, {}},
                      {std::string(kChunkId), ColumnType::Int64, false, {}}};
  for (auto& c : payload_columns) d.schema.columns.push_back(std::move(c));
  d.schema.primary_key = {0, 1};
  d.schema.sort_key = {0, 1};
  d.validate();
  return d;
}

void TableDef::validate() const {
  if (name.empty()) fail(ErrorCode::SchemaMismatch, "table name is empty");
  schema.validate();
  const auto& c = schema.columns;
  if (c.size() < 2 || c[0].name != kDocumentId || c[1].name != kChunkId || c[0].type != ColumnType::Int64 ||
      c[1].type != ColumnType::Int64 || c[0].nullable || c[1].nullable) {
    fail(ErrorCode::SchemaMismatch, "first columns must be non-null int64 document_id, chunk_id");
  }
  if (schema.primary_key != std::vector<std::uint32_t>{0, 1}) fail(ErrorCode::SchemaMismatch, "primary key must be (document_id, chunk_id)");
  if (schema.sort_key.size() < 2 || schema.sort_key[0] != 0 || schema.sort_key[1] != 1) {
    fail(ErrorCode::SchemaMismatch, "sort key must start with (document_id, chunk_id)");
  }
  for (const auto& col : c) {
    if (col.name.rfind("__", 0) == 0) fail(ErrorCode::SchemaMismatch, "column names starting with __ are reserved");
  }
}

RowKey TableDef::key_of(const Row& row) const { return {std::get<std::int64_t>(row[0]), std::get<std::int64_t>(row[1])}; }

// ---------------------------------------------------------------- schema json

std::string schema_to_json(const snf::Schema& schema) {
  json j;
  j["columns"] = json::array();
  for (const auto& c : schema.columns) {
    j["columns"].push_back({{"name", c.name}, {"type", std::string(to_string(c.type))}, {"nullable", c.nullable},
                            {"encoding", codec_name(c.encoding)}});
  }
  j["sort_key"] = schema.sort_key;
  j["primary_key"] = schema.primary_key;
  return j.dump();
}

snf::Schema schema_from_json(const std::string& text) {
  snf::Schema s;
  try {
    auto j = json::parse(text);
    for (const auto& c : j.at("columns")) {
      snf::ColumnSchema col;
      col.name = c.at("name").get<std::string>();
      auto type = parse_column_type(c.at("type").get<std::string>());
      if (!type) fail(ErrorCode::SchemaMismatch, "unknown column type");
      col.type = *type;
      col.nullable = c.value("nullable", true);
      const auto codec = c.value("encoding", std::string());
      if (!codec.empty()) {
        auto id = enc::parse_codec(codec);
        if (!id) fail(ErrorCode::SchemaMismatch, "unknown codec " + codec);
        col.encoding = *id;
      }
      s.columns.push_back(std::move(col));
    }
    s.sort_key = j.value("sort_key", std::vector<std::uint32_t>{});
    s.primary_key = j.value("primary_key", std::vector<std::uint32_t>{});
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("schema json: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------- txn / pins

Txn::Txn(Txn&& o) noexcept : table_(o.table_), id_(o.id_) { o.table_ = nullptr; }

Txn& Txn::operator=(Txn&& o) noexcept {
  if (this != &o) {
    if (table_) table_->release_txn(*this);
    table_ = o.table_;
    id_ = o.id_;
    o.table_ = nullptr;
  }
  return *this;
}

Txn::~Txn() {
  if (table_) table_->release_txn(*this);
}

PinnedSnapshot::PinnedSnapshot(PinnedSnapshot&& o) noexcept : table_(o.table_), version_(o.version_) {
  o.table_ = nullptr;
}

PinnedSnapshot& PinnedSnapshot::operator=(PinnedSnapshot&& o) noexcept {
  if (this != &o) {
    release();
    table_ = o.table_;
    version_ = o.version_;
    o.table_ = nullptr;
  }
  return *this;
}

PinnedSnapshot::~PinnedSnapshot() { release(); }

void PinnedSnapshot::release() {
  if (table_) table_->unpin(version_);
  table_ = nullptr;
}

// ---------------------------------------------------------------- lifecycle

namespace {

snf::Schema make_segment_schema(const snf::Schema& user) {
  snf::Schema s = user;
  for (std::size_t i = 2; i < s.columns.size(); ++i) s.columns[i].nullable = true;
  for (auto name : {kSeqColumn, kVersionColumn, kTombColumn}) {
    s.columns.push_back({std::string(name), ColumnType::Int64, false, {}});
  }
  s.sort_key = {0, 1};
  s.primary_key = {0, 1};
  return s;
}

}  // namespace

std::unique_ptr<Table> Table::create(const fs::path& dir, const TableDef& def, TableOptions options) {
  def.validate();
  if (fs::exists(dir / "manifest.json")) fail(ErrorCode::IoError, "table already exists at " + dir.string());
  fs::create_directories(dir / "segments");
  std::unique_ptr<Table> t(new Table());
  t->dir_ = dir;
  t->def_ = def;
  t->options_ = std::move(options);
  t->segment_schema_ = make_segment_schema(def.schema);
  t->save_manifest();
  t->replay_wal();
  return t;
}

std::unique_ptr<Table> Table::open(const fs::path& dir, TableOptions options) {
  if (!fs::exists(dir / "manifest.json")) fail(ErrorCode::UnknownTable, "no table at " + dir.string());
  std::unique_ptr<Table> t(new Table());
  t->dir_ = dir;
  t->options_ = std::move(options);
  t->load_manifest();
  t->segment_schema_ = make_segment_schema(t->def_.schema);
  t->replay_wal();
  return t;
}

Table::~Table() {
  if (wal_fd_ >= 0) ::close(wal_fd_);
}

std::int64_t Table::now_ms() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::uint64_t Table::current_version() const {
  std::shared_lock lk(mu_);
  return version_;
}

// ---------------------------------------------------------------- manifest

void Table::save_manifest() const {
  json j;
  j["format"] = kManifestFormat;
  j["name"] = def_.name;
  j["schema"] = json::parse(schema_to_json(def_.schema));
  j["current_version"] = version_;
  j["next_seq"] = next_seq_;
  j["next_txn"] = next_txn_;
  j["next_segment_id"] = next_segment_id_;
  j["flushed_version"] = flushed_version_;
  j["gc_floor"] = gc_floor_;
  j["segments"] = json::array();
  for (const auto& s : segments_) {
    json js = {{"id", s.id},
               {"kind", std::string(to_string(s.kind))},
               {"file", s.file},
               {"min_version", s.min_version},
               {"max_version", s.max_version},
               {"created_version", s.created_version},
               {"rows", s.rows}};
    js["retired_version"] = s.retired_version ? json(*s.retired_version) : json(nullptr);
    j["segments"].push_back(js);
  }
  j["pins"] = persistent_pins_;
  const auto text = j.dump(2);
  snf::write_bytes_atomic(dir_ / "manifest.json",
                          ByteSpan(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void Table::load_manifest() {
  std::ifstream in(dir_ / "manifest.json");
  json j;
  try {
    j = json::parse(in);
    if (j.at("format").get<int>() != kManifestFormat) fail(ErrorCode::UnsupportedVersion, "manifest format");
    def_.name = j.at("name").get<std::string>();
    def_.schema = schema_from_json(j.at("schema").dump());
    version_ = j.at("current_version").get<std::uint64_t>();
    next_seq_ = j.at("next_seq").get<std::uint64_t>();
    next_txn_ = j.at("next_txn").get<std::uint64_t>();
    next_segment_id_ = j.at("next_segment_id").get<std::uint64_t>();
    flushed_version_ = j.at("flushed_version").get<std::uint64_t>();
    gc_floor_ = j.at("gc_floor").get<std::uint64_t>();
    for (const auto& js : j.at("segments")) {
      SegmentInfo s;
      s.id = js.at("id").get<std::uint64_t>();
      s.kind = js.at("kind").get<std::string>() == "stable" ? SegmentKind::Stable : SegmentKind::Delta;
      s.file = js.at("file").get<std::string>();
      s.min_version = js.at("min_version").get<std::uint64_t>();
      s.max_version = js.at("max_version").get<std::uint64_t>();
      s.created_version = js.at("created_version").get<std::uint64_t>();
      s.rows = js.at("rows").get<std::uint64_t>();
      if (!js.at("retired_version").is_null()) s.retired_version = js.at("retired_version").get<std::uint64_t>();
      segments_.push_back(std::move(s));
    }
    persistent_pins_ = j.value("pins", std::map<std::string, std::uint64_t>{});
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, "manifest " + (dir_ / "manifest.json").string() + ": " + e.what());
  }
  def_.validate();
}

// ---------------------------------------------------------------- WAL

namespace {

Bytes frame(const Bytes& body) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(body.size()));
  w.put(crc32c(ByteSpan(body)));
  w.put_bytes(ByteSpan(body));
  return w.take();
}

Bytes write_record(std::uint64_t txn, const Entry& e) {
  ByteWriter w;
  w.put(kWalWrite);
  w.put(txn);
  w.put(e.seq);
  w.put(e.key.document_id);
  w.put(e.key.chunk_id);
  w.put<std::uint8_t>(e.tomb ? 1 : 0);
  write_row(w, e.row);
  return frame(w.buf());
}

Bytes commit_record(std::uint64_t txn, std::uint64_t version, std::int64_t time_ms) {
  ByteWriter w;
  w.put(kWalCommit);
  w.put(txn);
  w.put(version);
  w.put(time_ms);
  return frame(w.buf());
}

void write_all(int fd, const Bytes& bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n <= 0) fail(ErrorCode::IoError, "wal write failed");
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

void Table::replay_wal() {
  const auto path = dir_ / "wal.log";
  Bytes data;
  if (fs::exists(path)) data = snf::read_file_bytes(path);

  std::map<std::uint64_t, std::vector<Entry>> pending;
  std::size_t good = 0;
  ByteReader r{ByteSpan(data), ErrorCode::WalCorrupt};
  while (r.remaining() >= 8) {
    const auto len = r.get<std::uint32_t>();
    const auto crc = r.get<std::uint32_t>();
    if (len > r.remaining()) break;
    auto body = r.get_bytes(len);
    if (crc32c(body) != crc) break;
    ByteReader b(body, ErrorCode::WalCorrupt);
    const auto type = b.get<std::uint8_t>();
    const auto txn = b.get<std::uint64_t>();
    next_txn_ = std::max(next_txn_, txn + 1);
    if (type == kWalWrite) {
      Entry e;
      e.seq = b.get<std::uint64_t>();
      e.key.document_id = b.get<std::int64_t>();
      e.key.chunk_id = b.get<std::int64_t>();
      e.tomb = b.get<std::uint8_t>() != 0;
      e.row = read_row(b);
      next_seq_ = std::max(next_seq_, e.seq + 1);
      pending[txn].push_back(std::move(e));
    } else if (type == kWalCommit) {
      const auto version = b.get<std::uint64_t>();
      const auto time_ms = b.get<std::int64_t>();
      version_ = std::max(version_, version);
      auto it = pending.find(txn);
      if (version > flushed_version_ && it != pending.end()) {
        for (auto& e : it->second) {
          staging_[e.key].push_back({e.seq, version, e.tomb, std::move(e.row), time_ms});
          ++staged_count_;
        }
      }
      if (it != pending.end()) pending.erase(it);
    } else {
      fail(ErrorCode::WalCorrupt, "unknown wal record type " + std::to_string(type));
    }
    good = r.position();
  }

  wal_fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT, 0644);
  if (wal_fd_ < 0) fail(ErrorCode::IoError, "cannot open " + path.string());
  // Drop a torn tail so later appends follow the last intact record.
  if (good != data.size() && ::ftruncate(wal_fd_, static_cast<off_t>(good)) != 0) {
    fail(ErrorCode::IoError, "cannot truncate wal");
  }
  ::lseek(wal_fd_, 0, SEEK_END);
}

void Table::append_wal(const Bytes& record) {
  write_all(wal_fd_, record);
  if (options_.sync_wal) ::fdatasync(wal_fd_);
}

void Table::rewrite_wal() {
  Bytes out;
  if (open_txn_) {
    for (const auto& e : open_entries_) {
      auto rec = write_record(*open_txn_, e);
      out.insert(out.end(), rec.begin(), rec.end());
    }
  }
  const auto path = dir_ / "wal.log";
  snf::write_bytes_atomic(path, ByteSpan(out));
  ::close(wal_fd_);
  wal_fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND, 0644);
  if (wal_fd_ < 0) fail(ErrorCode::IoError, "cannot reopen wal");
}

// ---------------------------------------------------------------- write path

void Table::check_row(const Row& row) const {
  const auto& cols = def_.schema.columns;
  if (row.size() != cols.size()) {
    fail(ErrorCode::SchemaMismatch, "row has " + std::to_string(row.size()) + " values, table has " +
                                        std::to_string(cols.size()) + " columns");
  }
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (is_null(row[i])) {
      if (!cols[i].nullable) fail(ErrorCode::SchemaMismatch, "NULL in non-nullable column " + cols[i].name);
    } else if (type_of(row[i]) != cols[i].type) {
      fail(ErrorCode::SchemaMismatch, "wrong type for column " + cols[i].name);
    }
  }
}

Txn Table::begin_txn() {
  std::unique_lock lk(mu_);
  if (open_txn_) fail(ErrorCode::TxnBusy, "transaction " + std::to_string(*open_txn_) + " is open");
  Txn t;
  t.table_ = this;
  t.id_ = next_txn_++;
  open_txn_ = t.id_;
  open_entries_.clear();
  return t;
}

void Table::write_row(Txn& txn, const Row& row) { write_rows(txn, {row}); }

void Table::write_rows(Txn& txn, const std::vector<Row>& rows) {
  std::unique_lock lk(mu_);
  if (txn.table_ != this || open_txn_ != txn.id_) fail(ErrorCode::TxnClosed, "transaction is not open");
  for (const auto& r : rows) check_row(r);
  Bytes batch;
  std::vector<Entry> added;
  for (const auto& r : rows) {
    Entry e;
    e.key = def_.key_of(r);
    e.seq = next_seq_++;
    e.row = r;
    auto rec = write_record(txn.id_, e);
    batch.insert(batch.end(), rec.begin(), rec.end());
    added.push_back(std::move(e));
  }
  append_wal(batch);
  for (auto& e : added) open_entries_.push_back(std::move(e));
}

void Table::delete_row(Txn& txn, RowKey key) {
  std::unique_lock lk(mu_);
  if (txn.table_ != this || open_txn_ != txn.id_) fail(ErrorCode::TxnClosed, "transaction is not open");
  Entry e;
  e.key = key;
  e.seq = next_seq_++;
  e.tomb = true;
  e.row.assign(def_.schema.columns.size(), Value{});
  e.row[0] = key.document_id;
  e.row[1] = key.chunk_id;
  append_wal(write_record(txn.id_, e));
  open_entries_.push_back(std::move(e));
}

std::uint64_t Table::commit(Txn& txn) {
  std::unique_lock lk(mu_);
  if (txn.table_ != this || open_txn_ != txn.id_) fail(ErrorCode::TxnClosed, "transaction is not open");
  const auto version = version_ + 1;
  const auto t = now_ms();
  append_wal(commit_record(txn.id_, version, t));
  for (auto& e : open_entries_) {
    staging_[e.key].push_back({e.seq, version, e.tomb, std::move(e.row), t});
    ++staged_count_;
  }
  version_ = version;
  open_entries_.clear();
  open_txn_.reset();
  txn.table_ = nullptr;
  return version;
}

void Table::abort(Txn& txn) {
  if (txn.table_ != this) fail(ErrorCode::TxnClosed, "transaction is not open");
  release_txn(txn);
}

void Table::release_txn(Txn& txn) noexcept {
  std::unique_lock lk(mu_);
  if (open_txn_ == txn.id_) {
    open_txn_.reset();
    open_entries_.clear();
  }
  txn.table_ = nullptr;
}

// ---------------------------------------------------------------- flush

std::size_t Table::staged_rows() const {
  std::shared_lock lk(mu_);
  return staged_count_;
}

SegmentInfo Table::write_segment(std::vector<Entry> entries, SegmentKind kind, std::uint64_t created_version,
                                 std::uint64_t file_version) {
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.key != b.key ? a.key < b.key : a.seq < b.seq; });
  const auto ncols = segment_schema_.columns.size();
  const auto nuser = def_.schema.columns.size();
  std::vector<snf::ColumnData> cols(ncols);
  SegmentInfo info;
  info.id = next_segment_id_++;
  info.kind = kind;
  info.created_version = created_version;
  info.rows = entries.size();
  info.min_version = entries.empty() ? 0 : UINT64_MAX;
  for (auto& e : entries) {
    for (std::size_t c = 0; c < nuser; ++c) cols[c].push_back(std::move(e.row[c]));
    cols[nuser].push_back(static_cast<std::int64_t>(e.seq));
    cols[nuser + 1].push_back(static_cast<std::int64_t>(e.version));
    cols[nuser + 2].push_back(std::int64_t{e.tomb ? 1 : 0});
    info.min_version = std::min(info.min_version, e.version);
    info.max_version = std::max(info.max_version, e.version);
  }
  snf::WriteOptions wo;
  wo.group_target_rows = options_.segment_group_rows;
  auto res = snf::write_file(cols, segment_schema_, wo);
  info.file = std::to_string(file_version) + "-" + std::string(to_string(kind)) + ".snf";
  if (fs::exists(dir_ / "segments" / info.file)) {
    info.file = std::to_string(file_version) + "-" + std::string(to_string(kind)) + "-" + std::to_string(info.id) + ".snf";
  }
  snf::write_bytes_atomic(dir_ / "segments" / info.file, ByteSpan(res.bytes));
  {
    std::lock_guard hl(handles_mu_);
    handles_[info.id] = snf::open_file(std::move(res.bytes));
  }
  return info;
}

std::optional<SegmentInfo> Table::flush_staging(const FlushPolicy& policy) {
  std::unique_lock lk(mu_);
  if (staged_count_ == 0) return std::nullopt;
  std::int64_t oldest = INT64_MAX;
  for (const auto& [k, v] : staging_) {
    for (const auto& s : v) oldest = std::min(oldest, s.committed_ms);
  }
  if (staged_count_ < policy.max_rows && now_ms() - oldest < policy.max_age_ms) return std::nullopt;
  return flush_locked();
}

std::optional<SegmentInfo> Table::flush_now() {
  std::unique_lock lk(mu_);
  return flush_locked();
}

std::optional<SegmentInfo> Table::flush_locked() {
  if (staged_count_ == 0) return std::nullopt;
  std::vector<Entry> entries;
  entries.reserve(staged_count_);
  for (const auto& [key, chain] : staging_) {
    for (const auto& s : chain) entries.push_back({key, s.seq, s.version, s.tomb, s.row});
  }
  // Flushed rows keep their own versions, so the segment is readable at every snapshot.
  auto info = write_segment(std::move(entries), SegmentKind::Delta, 0, version_);
  segments_.push_back(info);
  flushed_version_ = version_;
  staging_.clear();
  staged_count_ = 0;
  save_manifest();
  rewrite_wal();
  return info;
}

// ---------------------------------------------------------------- read path

void Table::check_snapshot(std::uint64_t snapshot) const {
  if (snapshot > version_) {
    fail(ErrorCode::OutOfRange, "snapshot " + std::to_string(snapshot) + " is newer than version " + std::to_string(version_));
  }
  if (snapshot < gc_floor_) {
    fail(ErrorCode::SnapshotRetired, "snapshot " + std::to_string(snapshot) + " predates gc floor " + std::to_string(gc_floor_));
  }
}

std::vector<const SegmentInfo*> Table::visible_segments(std::uint64_t snapshot) const {
  std::vector<const SegmentInfo*> out;
  for (const auto& s : segments_) {
    if (s.visible_at(snapshot)) out.push_back(&s);
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) {
    return a->max_version != b->max_version ? a->max_version > b->max_version : a->id > b->id;
  });
  return out;
}

snf::FileHandlePtr Table::segment_handle(std::uint64_t segment_id) const {
  std::lock_guard hl(handles_mu_);
  if (auto it = handles_.find(segment_id); it != handles_.end()) return it->second;
  for (const auto& s : segments_) {
    if (s.id == segment_id) {
      auto h = snf::FileHandle::open_path(dir_ / "segments" / s.file);
      handles_[segment_id] = h;
      return h;
    }
  }
  fail(ErrorCode::NotFound, "segment " + std::to_string(segment_id));
}

namespace {

bool key_matches(const RowKey& k, const Predicate& key_pred) {
  for (const auto& c : key_pred) {
    const Value v = c.column == kDocumentId ? Value(k.document_id) : Value(k.chunk_id);
    if (!eval_cmp(v, c.op, c.literal)) return false;
  }
  return true;
}

}  // namespace

std::map<RowKey, Entry> Table::resolve(std::uint64_t snapshot, const Predicate& key_pred, ScanStats* stats) const {
  std::map<RowKey, Entry> best;
  const auto nuser = def_.schema.columns.size();
  auto consider = [&](Entry&& e) {
    auto it = best.find(e.key);
    if (it == best.end()) best.emplace(e.key, std::move(e));
    else if (e.seq > it->second.seq) it->second = std::move(e);
  };
  std::vector<std::uint32_t> all(segment_schema_.columns.size());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;

  for (const auto* seg : visible_segments(snapshot)) {
    if (seg->rows == 0 || seg->min_version > snapshot) continue;
    auto h = segment_handle(seg->id);
    const auto groups = h->prune(key_pred);
    if (stats) {
      ++stats->segments_visited;
      stats->groups_total += h->groups().size();
      stats->groups_read += groups.size();
      stats->blocks_read += groups.size() * all.size();
    }
    for (auto g : groups) {
      auto rows = h->read_group(g, all);
      if (stats) stats->rows_read += rows.size();
      for (auto& r : rows) {
        const auto version = static_cast<std::uint64_t>(std::get<std::int64_t>(r[nuser + 1]));
        if (version > snapshot) continue;
        Entry e;
        e.key = def_.key_of(r);
        if (!key_matches(e.key, key_pred)) continue;
        e.seq = static_cast<std::uint64_t>(std::get<std::int64_t>(r[nuser]));
        e.version = version;
        e.tomb = std::get<std::int64_t>(r[nuser + 2]) != 0;
        r.resize(nuser);
        e.row = std::move(r);
        consider(std::move(e));
      }
    }
  }
  for (const auto& [key, chain] : staging_) {
    if (!key_matches(key, key_pred)) continue;
    const Staged* newest = nullptr;
    for (const auto& s : chain) {
      if (stats) ++stats->rows_read;
      if (s.version <= snapshot && (!newest || s.seq > newest->seq)) newest = &s;
    }
    if (newest) consider({key, newest->seq, newest->version, newest->tomb, newest->row});
  }
  return best;
}

std::optional<Entry> Table::resolve_key(std::uint64_t snapshot, RowKey key) const {
  if (auto it = staging_.find(key); it != staging_.end()) {
    const Staged* newest = nullptr;
    for (const auto& s : it->second) {
      if (s.version <= snapshot && (!newest || s.seq > newest->seq)) newest = &s;
    }
    // Staged entries are always newer than anything already flushed for the key.
    if (newest) return Entry{key, newest->seq, newest->version, newest->tomb, newest->row};
  }
  const auto nuser = def_.schema.columns.size();
  std::vector<std::uint32_t> all(segment_schema_.columns.size());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  std::optional<Entry> best;
  for (const auto* seg : visible_segments(snapshot)) {
    if (seg->rows == 0 || seg->min_version > snapshot) continue;
    if (best && seg->max_version < best->version) break;
    auto h = segment_handle(seg->id);
    for (const auto& hit : h->locate_key({Value(key.document_id), Value(key.chunk_id)}, all)) {
      std::vector<snf::ColumnData> cols;
      cols.reserve(all.size());
      for (std::size_t c = 0; c < all.size(); ++c) {
        cols.push_back(h->read_block(hit.blocks[c], segment_schema_.columns[c].type));
      }
      for (std::size_t i = 0; i < cols[0].size(); ++i) {
        if (std::get<std::int64_t>(cols[0][i]) != key.document_id || std::get<std::int64_t>(cols[1][i]) != key.chunk_id) {
          continue;
        }
        const auto version = static_cast<std::uint64_t>(std::get<std::int64_t>(cols[nuser + 1][i]));
        const auto seq = static_cast<std::uint64_t>(std::get<std::int64_t>(cols[nuser][i]));
        if (version > snapshot || (best && best->seq >= seq)) continue;
        Entry e{key, seq, version, std::get<std::int64_t>(cols[nuser + 2][i]) != 0, Row(nuser)};
        for (std::size_t c = 0; c < nuser; ++c) e.row[c] = cols[c][i];
        best = std::move(e);
      }
    }
  }
  return best;
}

std::optional<Row> Table::point_lookup(std::uint64_t snapshot, RowKey key) const {
  std::shared_lock lk(mu_);
  check_snapshot(snapshot);
  auto e = resolve_key(snapshot, key);
  if (!e || e->tomb) return std::nullopt;
  return std::move(e->row);
}

ScanResult Table::scan(std::uint64_t snapshot, const Predicate& pred, const std::vector<std::string>& projection) const {
  std::shared_lock lk(mu_);
  check_snapshot(snapshot);
  const auto& schema = def_.schema;
  std::vector<std::uint32_t> pred_cols;
  Predicate key_pred;
  for (const auto& c : pred) {
    pred_cols.push_back(schema.require(c.column));
    if (is_key_column(c.column)) key_pred.push_back(c);
  }
  std::vector<std::uint32_t> proj;
  ScanResult out;
  if (projection.empty()) {
    for (std::uint32_t i = 0; i < schema.columns.size(); ++i) proj.push_back(i);
  } else {
    for (const auto& name : projection) proj.push_back(schema.require(name));
  }
  for (auto c : proj) out.columns.push_back(schema.columns[c].name);

  for (auto& [key, e] : resolve(snapshot, key_pred, &out.stats)) {
    if (e.tomb) continue;
    bool ok = true;
    for (std::size_t i = 0; i < pred.size() && ok; ++i) ok = eval_cmp(e.row[pred_cols[i]], pred[i].op, pred[i].literal);
    if (!ok) continue;
    Row r;
    r.reserve(proj.size());
    for (auto c : proj) r.push_back(std::move(e.row[c]));
    out.rows.push_back(std::move(r));
  }
  return out;
}

std::vector<ChangeRecord> Table::changes(std::uint64_t from, std::uint64_t to) const {
  std::shared_lock lk(mu_);
  check_snapshot(from);
  check_snapshot(to);
  if (from >= to) return {};
  std::set<RowKey> keys;
  for (const auto& [key, chain] : staging_) {
    for (const auto& s : chain) {
      if (s.version > from && s.version <= to) keys.insert(key);
    }
  }
  const auto nuser = def_.schema.columns.size();
  for (const auto& seg : segments_) {
    if (!(seg.visible_at(to) || seg.visible_at(from)) || seg.rows == 0) continue;
    if (seg.max_version <= from || seg.min_version > to) continue;
    auto h = segment_handle(seg.id);
    auto versions = h->read_all({0, 1, static_cast<std::uint32_t>(nuser + 1)});
    for (const auto& r : versions) {
      const auto v = static_cast<std::uint64_t>(std::get<std::int64_t>(r[2]));
      if (v > from && v <= to) keys.insert({std::get<std::int64_t>(r[0]), std::get<std::int64_t>(r[1])});
    }
  }
  std::vector<ChangeRecord> out;
  for (const auto& key : keys) {
    auto b = resolve_key(from, key);
    auto a = resolve_key(to, key);
    ChangeRecord rec{key, {}, {}, b ? b->seq : 0, a ? a->seq : 0};
    if (b && !b->tomb) rec.before = std::move(b->row);
    if (a && !a->tomb) rec.after = std::move(a->row);
    if (!rec.before && !rec.after) continue;
    if (rec.before && rec.after && bit_equal(*rec.before, *rec.after)) continue;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<Entry> Table::visible_entries(std::uint64_t snapshot) const {
  std::shared_lock lk(mu_);
  check_snapshot(snapshot);
  std::vector<Entry> out;
  for (auto& [key, e] : resolve(snapshot, {}, nullptr)) {
    if (!e.tomb) out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------- pins and gc

PinnedSnapshot Table::pin() {
  std::unique_lock lk(mu_);
  PinnedSnapshot p;
  p.table_ = this;
  p.version_ = version_;
  pins_.insert(version_);
  return p;
}

PinnedSnapshot Table::pin_at(std::uint64_t version) {
  std::unique_lock lk(mu_);
  check_snapshot(version);
  PinnedSnapshot p;
  p.table_ = this;
  p.version_ = version;
  pins_.insert(version);
  return p;
}

void Table::unpin(std::uint64_t version) noexcept {
  std::unique_lock lk(mu_);
  if (auto it = pins_.find(version); it != pins_.end()) pins_.erase(it);
}

void Table::set_persistent_pin(const std::string& owner, std::uint64_t version) {
  std::unique_lock lk(mu_);
  check_snapshot(version);
  persistent_pins_[owner] = version;
  save_manifest();
}

void Table::clear_persistent_pin(const std::string& owner) {
  std::unique_lock lk(mu_);
  if (persistent_pins_.erase(owner)) save_manifest();
}

std::optional<std::uint64_t> Table::oldest_pin() const {
  std::shared_lock lk(mu_);
  std::optional<std::uint64_t> m;
  if (!pins_.empty()) m = *pins_.begin();
  for (const auto& [o, v] : persistent_pins_) m = m ? std::min(*m, v) : v;
  return m;
}

std::size_t Table::gc() {
  const auto oldest = oldest_pin();
  std::unique_lock lk(mu_);
  std::size_t removed = 0;
  std::vector<SegmentInfo> keep;
  for (auto& s : segments_) {
    if (s.retired_version && (!oldest || *oldest >= *s.retired_version)) {
      fs::remove(dir_ / "segments" / s.file);
      {
        std::lock_guard hl(handles_mu_);
        handles_.erase(s.id);
      }
      gc_floor_ = std::max(gc_floor_, *s.retired_version);
      ++removed;
    } else {
      keep.push_back(std::move(s));
    }
  }
  segments_ = std::move(keep);
  if (removed) save_manifest();
  return removed;
}

std::uint64_t Table::gc_floor() const {
  std::shared_lock lk(mu_);
  return gc_floor_;
}

std::vector<SegmentInfo> Table::segments() const {
  std::shared_lock lk(mu_);
  return segments_;
}

std::vector<SegmentInfo> Table::live_segments(std::optional<SegmentKind> kind) const {
  std::shared_lock lk(mu_);
  std::vector<SegmentInfo> out;
  for (const auto& s : segments_) {
    if (s.live() && (!kind || s.kind == *kind)) out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.max_version != b.max_version ? a.max_version < b.max_version : a.id < b.id;
  });
  return out;
}

// ---------------------------------------------------------------- compaction hooks

std::vector<Entry> Table::read_segment(std::uint64_t segment_id) const {
  auto h = segment_handle(segment_id);
  const auto nuser = def_.schema.columns.size();
  std::vector<Entry> out;
  for (auto& r : h->read_all(h->all_columns())) {
    Entry e;
    e.key = def_.key_of(r);
    e.seq = static_cast<std::uint64_t>(std::get<std::int64_t>(r[nuser]));
    e.version = static_cast<std::uint64_t>(std::get<std::int64_t>(r[nuser + 1]));
    e.tomb = std::get<std::int64_t>(r[nuser + 2]) != 0;
    r.resize(nuser);
    e.row = std::move(r);
    out.push_back(std::move(e));
  }
  return out;
}

bool Table::key_in_segments(RowKey key, const std::vector<std::uint64_t>& segment_ids) const {
  for (auto id : segment_ids) {
    auto h = segment_handle(id);
    for (const auto& hit : h->locate_key({Value(key.document_id), Value(key.chunk_id)}, {0, 1})) {
      auto docs = h->read_block(hit.blocks[0], ColumnType::Int64);
      auto chunks = h->read_block(hit.blocks[1], ColumnType::Int64);
      for (std::size_t i = 0; i < docs.size(); ++i) {
        if (std::get<std::int64_t>(docs[i]) == key.document_id && std::get<std::int64_t>(chunks[i]) == key.chunk_id) {
          return true;
        }
      }
    }
  }
  return false;
}

SegmentInfo Table::install_merge(const std::vector<std::uint64_t>& inputs, std::vector<Entry> merged) {
  std::unique_lock lk(mu_);
  for (auto id : inputs) {
    auto it = std::find_if(segments_.begin(), segments_.end(), [&](const auto& s) { return s.id == id; });
    if (it == segments_.end() || !it->live()) {
      fail(ErrorCode::SegmentRetired, "merge input " + std::to_string(id) + " is no longer live");
    }
  }
  const auto merge_version = version_ + 1;
  auto info = write_segment(std::move(merged), SegmentKind::Stable, merge_version, merge_version);
  version_ = merge_version;
  for (auto& s : segments_) {
    if (std::find(inputs.begin(), inputs.end(), s.id) != inputs.end()) s.retired_version = merge_version;
  }
  segments_.push_back(info);
  save_manifest();
  return info;
}

// ---------------------------------------------------------------- database

Database::Database(fs::path root, TableOptions options) : root_(std::move(root)), options_(std::move(options)) {
  fs::create_directories(root_);
}

Table& Database::create_table(const TableDef& def) {
  auto t = Table::create(root_ / def.name, def, options_);
  auto& ref = *t;
  open_[def.name] = std::move(t);
  return ref;
}

Table& Database::table(const std::string& name) {
  if (auto it = open_.find(name); it != open_.end()) return *it->second;
  if (!has_table(name)) fail(ErrorCode::UnknownTable, "no table named '" + name + "'");
  auto t = Table::open(root_ / name, options_);
  auto& ref = *t;
  open_[name] = std::move(t);
  return ref;
}

bool Database::has_table(const std::string& name) const {
  return !name.empty() && name.find('/') == std::string::npos && fs::exists(root_ / name / "manifest.json");
}

std::vector<std::string> Database::table_names() const {
  std::vector<std::string> out;
  if (!fs::exists(root_)) return out;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace minihouse::engine
