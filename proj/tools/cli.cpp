#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "minihouse/bench/workloads.hpp"
#include "minihouse/cache/cache.hpp"
#include "minihouse/common/error.hpp"
#include "minihouse/compaction/controller.hpp"
#include "minihouse/engine/table.hpp"
#include "minihouse/format/sniffer.hpp"
#include "minihouse/hybrid/hybrid.hpp"
#include "minihouse/ivm/view.hpp"

namespace minihouse::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kCacheRootEnv = "MINIHOUSE_CACHE_ROOT";

struct Globals {
  std::string root = ".";
  bool json = false;
  std::uint64_t seed = 42;
  bool no_sync = false;
};

json value_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(x)) return format_value(Value(x));
          return x;
        } else {
          return x;
        }
      },
      v);
}

json row_json(const std::vector<std::string>& columns, const Row& row) {
  json j = json::object();
  for (std::size_t i = 0; i < columns.size() && i < row.size(); ++i) j[columns[i]] = value_json(row[i]);
  return j;
}

Value value_from_json(const nlohmann::json& j, const snf::ColumnSchema& col) {
  if (j.is_null()) return Value{};
  auto bad = [&] { fail(ErrorCode::SchemaMismatch, "column '" + col.name + "' expects " + std::string(to_string(col.type))); };
  switch (col.type) {
    case ColumnType::Int64:
      if (!j.is_number_integer()) bad();
      return j.get<std::int64_t>();
    case ColumnType::Float64:
      if (!j.is_number()) bad();
      return j.get<double>();
    case ColumnType::String:
      if (!j.is_string()) bad();
      return j.get<std::string>();
    case ColumnType::Vector: {
      if (!j.is_array()) bad();
      FloatVector v;
      for (const auto& x : j) {
        if (!x.is_number()) bad();
        v.push_back(x.get<float>());
      }
      return v;
    }
  }
  bad();
  return Value{};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

engine::TableOptions table_options(const Globals& g) {
  engine::TableOptions o;
  o.sync_wal = !g.no_sync;
  return o;
}

std::vector<double> parse_csv_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidConfig, "not a number: '" + item + "'");
    }
  }
  return out;
}

hybrid::Relation relation_of(const engine::Table& t) {
  auto scan = t.scan(t.current_version(), Predicate{});
  return hybrid::Relation{std::move(scan.columns), std::move(scan.rows)};
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string table, input, schema;
  std::size_t batch = 1000;
  bool no_flush = false;
};

int cmd_ingest(const Globals& g, const IngestArgs& a, std::ostream& out) {
  engine::Database db(g.root, table_options(g));
  if (!db.has_table(a.table)) {
    if (a.schema.empty()) fail(ErrorCode::UnknownTable, "table '" + a.table + "' does not exist; pass --schema to create it");
    auto s = engine::schema_from_json(read_text(a.schema));
    std::vector<snf::ColumnSchema> payload;
    for (const auto& c : s.columns) {
      if (c.name != engine::kDocumentId && c.name != engine::kChunkId) payload.push_back(c);
    }
    db.create_table(engine::TableDef::make(a.table, payload));
  }
  auto& t = db.table(a.table);
  const auto& cols = t.def().schema.columns;
  std::ifstream in(a.input);
  if (!in) fail(ErrorCode::NotFound, "cannot read " + a.input);
  std::uint64_t written = 0, deleted = 0, line_no = 0, commits = 0;
  auto txn = t.begin_txn();
  std::size_t in_txn = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, a.input + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::ParseError, a.input + ":" + std::to_string(line_no) + ": expected an object");
    for (const auto& [k, _] : j.items()) {
      if (k != "_delete" && !t.def().schema.find(k)) fail(ErrorCode::UnknownColumn, "line " + std::to_string(line_no) + ": column '" + k + "'");
    }
    Row row;
    for (const auto& c : cols) row.push_back(j.contains(c.name) ? value_from_json(j[c.name], c) : Value{});
    if (j.value("_delete", false)) {
      t.delete_row(txn, t.def().key_of(row));
      ++deleted;
    } else {
      t.write_row(txn, row);
      ++written;
    }
    if (++in_txn >= a.batch) {
      t.commit(txn);
      ++commits;
      txn = t.begin_txn();
      in_txn = 0;
    }
  }
  if (in_txn > 0) {
    t.commit(txn);
    ++commits;
  } else {
    t.abort(txn);
  }
  std::optional<engine::SegmentInfo> seg;
  if (!a.no_flush) seg = t.flush_now();
  if (g.json) {
    json j{{"table", a.table}, {"rows_written", written}, {"rows_deleted", deleted}, {"commits", commits},
           {"version", t.current_version()}};
    j["flushed_segment"] = seg ? json(seg->id) : json(nullptr);
    out << j.dump(2) << '\n';
  } else {
    out << "ingested " << written << " rows, " << deleted << " deletes into '" << a.table << "' (version "
        << t.current_version() << ", " << commits << " commits)";
    if (seg) out << "; flushed delta segment " << seg->id << " with " << seg->rows << " rows";
    out << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- lookup

struct LookupArgs {
  std::string table;
  std::int64_t doc = 0, chunk = 0;
  std::optional<std::uint64_t> version;
};

int cmd_lookup(const Globals& g, const LookupArgs& a, std::ostream& out) {
  engine::Database db(g.root, table_options(g));
  auto& t = db.table(a.table);
  const auto v = a.version.value_or(t.current_version());
  auto row = t.point_lookup(v, {a.doc, a.chunk});
  if (!row) fail(ErrorCode::NotFound, "no row " + engine::format_key({a.doc, a.chunk}) + " at version " + std::to_string(v));
  std::vector<std::string> names;
  for (const auto& c : t.def().schema.columns) names.push_back(c.name);
  if (g.json) {
    out << json{{"version", v}, {"row", row_json(names, *row)}}.dump(2) << '\n';
  } else {
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << " = " << format_value((*row)[i]) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- query

struct QueryArgs {
  std::string table, join, where, vector_file, vector, terms;
  std::string fusion = "rrf", runtime_filter = "auto", weights;
  std::string vector_column = "emb", text_column = "body", key = "document_id";
  double rrf_k = 60;
  std::size_t topk = 10;
};

int cmd_query(const Globals& g, const QueryArgs& a, std::ostream& out) {
  engine::Database db(g.root, table_options(g));
  hybrid::HybridQuery q;
  q.vector_column = a.vector_column;
  q.text_column = a.text_column;
  if (!a.vector_file.empty()) {
    auto j = nlohmann::json::parse(read_text(a.vector_file), nullptr, false);
    if (!j.is_array()) fail(ErrorCode::ParseError, a.vector_file + ": expected a JSON array of numbers");
    FloatVector v;
    for (const auto& x : j) {
      if (!x.is_number()) fail(ErrorCode::ParseError, a.vector_file + ": expected a JSON array of numbers");
      v.push_back(x.get<float>());
    }
    q.vector = v;
  } else if (!a.vector.empty()) {
    FloatVector v;
    for (double x : parse_csv_doubles(a.vector)) v.push_back(static_cast<float>(x));
    q.vector = v;
  }
  {
    std::istringstream ss(a.terms);
    for (std::string w; ss >> w;) q.terms.push_back(w);
  }
  if (!q.vector && q.terms.empty()) fail(ErrorCode::InvalidConfig, "query needs --vector-file/--vector or --terms");
  if (a.fusion == "rrf") q.fusion.mode = hybrid::FusionMode::Rrf;
  else if (a.fusion == "score") q.fusion.mode = hybrid::FusionMode::Score;
  else fail(ErrorCode::InvalidConfig, "--fusion must be rrf or score");
  q.fusion.rrf_k = a.rrf_k;
  q.fusion.top_k = a.topk;
  q.fusion.weights = parse_csv_doubles(a.weights);
  if (a.runtime_filter == "auto") q.runtime_filter = hybrid::FilterMode::Auto;
  else if (a.runtime_filter == "on") q.runtime_filter = hybrid::FilterMode::On;
  else if (a.runtime_filter == "off") q.runtime_filter = hybrid::FilterMode::Off;
  else fail(ErrorCode::InvalidConfig, "--runtime-filter must be auto, on or off");
  if (!a.where.empty()) q.label_predicate = parse_predicate(a.where);

  auto docs = relation_of(db.table(a.table));
  hybrid::Relation labels;
  std::size_t keep_columns = 0;
  if (!a.join.empty()) {
    labels = relation_of(db.table(a.join));
    q.doc_key = q.label_key = a.key;
  } else {
    // Without a label table the predicate applies to the documents themselves, joined 1:1.
    keep_columns = docs.columns.size();
    labels = docs;
    docs.columns.push_back("__row");
    labels.columns.push_back("__row");
    for (std::size_t i = 0; i < docs.rows.size(); ++i) {
      docs.rows[i].push_back(static_cast<std::int64_t>(i));
      labels.rows[i].push_back(static_cast<std::int64_t>(i));
    }
    q.doc_key = q.label_key = "__row";
  }
  auto r = hybrid::execute_hybrid(docs, labels, q);
  std::vector<std::string> columns = r.columns;
  std::vector<Row> rows = r.rows;
  if (keep_columns > 0) {
    columns.resize(keep_columns);
    for (auto& row : rows) row.resize(keep_columns);
  } else {
    for (std::size_t i = docs.columns.size(); i < columns.size(); ++i) columns[i] = a.join + "." + columns[i];
  }
  const auto& row_scores = r.row_scores;
  if (g.json) {
    json j;
    j["columns"] = columns;
    auto& arr = j["rows"] = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto o = row_json(columns, rows[i]);
      if (i < row_scores.size()) o["_score"] = row_scores[i];
      arr.push_back(o);
    }
    j["stats"] = {{"filter_built", r.stats.filter_built},
                  {"filter_kind", r.stats.filter_kind ? json(*r.stats.filter_kind == hybrid::RuntimeFilterKind::Bitmap ? "bitmap" : "bloom") : json(nullptr)},
                  {"selectivity", r.stats.selectivity},
                  {"rows_scored", r.stats.rows_scored},
                  {"candidates", r.stats.candidates}};
    out << j.dump(2) << '\n';
  } else {
    out << "score";
    for (const auto& c : columns) out << '\t' << c;
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", i < row_scores.size() ? row_scores[i] : 0.0);
      out << buf;
      for (const auto& v : rows[i]) out << '\t' << format_value(v);
      out << '\n';
    }
    out << rows.size() << " rows; scored " << r.stats.rows_scored << " rows";
    if (r.stats.filter_built) {
      out << " with a " << (*r.stats.filter_kind == hybrid::RuntimeFilterKind::Bitmap ? "bitmap" : "bloom")
          << " runtime filter";
    }
    out << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- compact

struct CompactArgs {
  std::string table;
  std::uint64_t ticks = 1;
  std::uint32_t n_star = 10;
  double k = 0.5;
  std::uint32_t max_batch = 8;
  double base_period = 4.0;
  bool flush = false;
};

int cmd_compact(const Globals& g, const CompactArgs& a, std::ostream& out) {
  engine::Database db(g.root, table_options(g));
  auto& t = db.table(a.table);
  std::optional<engine::SegmentInfo> flushed;
  if (a.flush) flushed = t.flush_now();
  compaction::ControllerConfig cfg;
  cfg.n_star = a.n_star;
  cfg.k = a.k;
  cfg.max_batch = a.max_batch;
  cfg.base_period = a.base_period;
  cfg.validate();
  compaction::Controller ctl(t, cfg);
  json ticks = json::array();
  std::uint64_t merges = 0;
  for (std::uint64_t i = 0; i < a.ticks; ++i) {
    auto rep = ctl.tick();
    json tj{{"tick", rep.tick}, {"n_delta", rep.n_delta}, {"alpha", rep.alpha}, {"batch", rep.batch}};
    tj["merged_segment"] = rep.merged ? json(rep.merged->id) : json(nullptr);
    if (rep.merged) ++merges;
    if (!g.json) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "tick %llu: deltas=%llu alpha=%.4f", static_cast<unsigned long long>(rep.tick),
                    static_cast<unsigned long long>(rep.n_delta), rep.alpha);
      out << buf;
      if (rep.merged) out << " merged " << rep.batch << " -> segment " << rep.merged->id;
      out << '\n';
    }
    ticks.push_back(tj);
  }
  const auto removed = t.gc();
  const auto deltas = t.live_segments(engine::SegmentKind::Delta).size();
  const auto stables = t.live_segments(engine::SegmentKind::Stable).size();
  if (g.json) {
    json j{{"table", a.table}, {"ticks", ticks}, {"merges", merges}, {"files_removed", removed},
           {"live_delta_segments", deltas}, {"live_stable_segments", stables}};
    j["flushed_segment"] = flushed ? json(flushed->id) : json(nullptr);
    out << j.dump(2) << '\n';
  } else {
    out << merges << " merges; " << deltas << " delta and " << stables << " stable segments live; " << removed
        << " files removed\n";
  }
  return 0;
}

// ---------------------------------------------------------------- view

struct ViewArgs {
  std::string file, name, interval, history, source = "avg";
  double util = 0.0;
  double k = 2.0, dt_min = 5.0, dt_base = 60.0, alpha = 0.5;
  std::size_t window = 8;
};

void print_trace(const Globals& g, const ViewArgs& a, const std::vector<double>& history, json& j, std::ostream& out) {
  ivm::RefreshConfig cfg;
  cfg.k = a.k;
  cfg.dt_min = a.dt_min;
  cfg.dt_base = a.dt_base;
  cfg.alpha = a.alpha;
  cfg.window = a.window;
  if (a.source == "avg") cfg.source = ivm::CostSource::Average;
  else if (a.source == "last") cfg.source = ivm::CostSource::Last;
  else fail(ErrorCode::InvalidConfig, "--source must be avg or last");
  cfg.validate();
  if (history.empty()) fail(ErrorCode::EmptyHistory, "no refresh durations recorded");
  const auto t = ivm::refresh_interval_trace(history, history.back(), a.util, cfg);
  if (g.json) {
    j["interval"] = {{"t_avg", t.t_avg}, {"t_last", t.t_last}, {"t_src", t.t_src}, {"scaled", t.scaled},
                     {"lower", t.lower}, {"dt_max", t.dt_max}, {"interval", t.interval}};
  } else {
    out << ivm::format_trace(t, cfg, a.util);
  }
}

int cmd_view(const Globals& g, const std::string& action, const ViewArgs& a, std::ostream& out) {
  engine::Database db(g.root, table_options(g));
  ivm::ViewCatalog catalog(db);
  json j;
  if (action == "create") {
    auto& v = catalog.create(read_text(a.file));
    catalog.save(v);
    j = {{"view", v.definition().name}, {"tables", v.definition().tables()}};
    if (!g.json) out << "created view '" << v.definition().name << "'\n";
  } else if (action == "refresh") {
    auto& v = catalog.get(a.name);
    const auto r = v.refresh();
    catalog.save(v);
    j = {{"view", a.name}, {"noop", r.noop}, {"to", r.to}, {"delta_rows", r.delta_rows},
         {"probe_rows", r.probe_rows}, {"output_deltas", r.output_deltas}, {"rows", v.rows().size()}};
    if (!g.json) {
      out << "refreshed '" << a.name << "'" << (r.noop ? " (no changes)" : "") << ": " << r.delta_rows
          << " change rows, " << r.probe_rows << " probe rows, " << r.output_deltas << " output deltas, "
          << v.rows().size() << " rows\n";
    }
    if (a.interval == "auto") {
      print_trace(g, a, a.history.empty() ? v.durations() : parse_csv_doubles(a.history), j, out);
    } else if (!a.interval.empty()) {
      fail(ErrorCode::InvalidConfig, "--interval accepts only 'auto'");
    }
  } else if (action == "show") {
    auto& v = catalog.get(a.name);
    if (!v.materialized()) fail(ErrorCode::InvalidConfig, "view '" + a.name + "' has not been refreshed");
    const auto& cols = v.columns();
    auto rows = v.rows();
    if (g.json) {
      j = {{"view", a.name}, {"columns", cols}, {"rows", json::array()}};
      for (const auto& r : rows) j["rows"].push_back(row_json(cols, r));
    } else {
      for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "\t" : "") << cols[i];
      out << '\n';
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << format_value(r[i]);
        out << '\n';
      }
    }
  } else if (action == "list") {
    j = {{"views", catalog.names()}};
    if (!g.json) {
      for (const auto& n : catalog.names()) out << n << '\n';
    }
  } else if (action == "drop") {
    catalog.drop(a.name);
    j = {{"dropped", a.name}};
    if (!g.json) out << "dropped view '" << a.name << "'\n";
  }
  if (g.json) out << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- fsck

struct FsckArgs {
  std::string file, table;
};

// Checks one file; returns false when any region is damaged.
bool fsck_file(const fs::path& path, const std::string& label, json& report, std::ostream& out, bool as_json) {
  json entry{{"file", label}};
  bool ok = true;
  json regions = json::object();
  try {
    auto h = snf::FileHandle::open_path(path);
    const auto rep = h->verify_integrity();
    for (const auto& r : rep.regions) {
      regions[std::string(snf::to_string(r.region))] = r.ok ? "ok" : "corrupt";
      ok = ok && r.ok;
    }
    if (ok) {
      try {
        h->read_all(h->all_columns());
      } catch (const Error& e) {
        if (!is_corruption(e.code())) throw;
        regions["data"] = "corrupt";
        ok = false;
      }
    }
  } catch (const Error& e) {
    if (!is_corruption(e.code()) && e.code() != ErrorCode::UnsupportedVersion) throw;
    regions["footer"] = std::string("corrupt: ") + std::string(to_string(e.code()));
    ok = false;
  }
  entry["regions"] = regions;
  entry["ok"] = ok;
  if (!as_json) {
    out << label << ": " << (ok ? "ok" : "CORRUPT") << '\n';
    for (const auto& [name, status] : regions.items()) out << "  " << name << ": " << status.get<std::string>() << '\n';
  }
  report.push_back(entry);
  return ok;
}

int cmd_fsck(const Globals& g, const FsckArgs& a, std::ostream& out) {
  json report = json::array();
  bool ok = true;
  if (!a.file.empty()) {
    if (!fs::exists(a.file)) fail(ErrorCode::NotFound, "no file " + a.file);
    ok = fsck_file(a.file, fs::path(a.file).filename().string(), report, out, g.json);
  } else {
    engine::Database db(g.root, table_options(g));
    auto& t = db.table(a.table);
    for (const auto& s : t.live_segments()) {
      ok = fsck_file(t.dir() / "segments" / s.file, s.file, report, out, g.json) && ok;
    }
  }
  if (g.json) out << json{{"ok", ok}, {"files", report}}.dump(2) << '\n';
  return ok ? 0 : 2;
}

// ---------------------------------------------------------------- cache-stats

struct CacheArgs {
  std::string cache_root;
  std::vector<std::string> files;
  std::uint64_t block_mb = 12, chunk_mb = 4, region_kb = 1024, segment_kb = 128, request_kb = 256;
  std::size_t passes = 2, random_reads = 0, nodes = 10;
};

int cmd_cache_stats(const Globals& g, const CacheArgs& a, std::ostream& out) {
  std::string root = a.cache_root;
  if (root.empty()) {
    if (const char* env = std::getenv(kCacheRootEnv)) root = env;
  }
  if (root.empty()) fail(ErrorCode::InvalidConfig, std::string("set --cache-root or ") + kCacheRootEnv);
  if (!fs::is_directory(root)) fail(ErrorCode::NotFound, "cache root " + root + " is not a directory");
  cache::CacheConfig cfg;
  cfg.block_bytes = a.block_mb * cache::kMiB;
  cfg.chunk_bytes = a.chunk_mb * cache::kMiB;
  cfg.region_bytes = a.region_kb * 1024;
  cfg.segment_bytes = a.segment_kb * 1024;
  cfg.nodes = a.nodes;
  cache::CachePlane plane(root, cfg);
  std::vector<std::string> files = a.files;
  if (files.empty()) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && name.front() != '.') files.push_back(fs::relative(e.path(), root).generic_string());
    }
    std::sort(files.begin(), files.end());
  }
  const std::uint64_t step = std::max<std::uint64_t>(1, a.request_kb * 1024);
  std::mt19937_64 rng(g.seed);
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>> reads;
  for (const auto& f : files) {
    const auto size = plane.backend().size(f);
    if (a.random_reads > 0) {
      for (std::size_t i = 0; i < a.random_reads; ++i) {
        const auto off = size ? rng() % size : 0;
        reads.emplace_back(f, off, std::min<std::uint64_t>(size - off, rng() % (step + 1)));
      }
    } else {
      for (std::uint64_t off = 0; off < size; off += step) reads.emplace_back(f, off, std::min(step, size - off));
    }
  }
  json passes = json::array();
  for (std::size_t p = 0; p < a.passes; ++p) {
    plane.reset_stats();
    for (const auto& [f, off, len] : reads) plane.read_range(f, off, len);
    const auto& s = plane.stats();
    auto pj = s.to_json();
    pj["balanced"] = s.balanced();
    passes.push_back(pj);
    if (!g.json) {
      out << "pass " << p + 1 << ": " << s.requests << " requests, " << s.bytes_requested << " bytes, "
          << s.backend_reads << " backend reads (" << s.bytes_from_backend << " bytes)\n";
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-8s %10s %10s %14s %10s\n", "tier", "hits", "misses", "bytes_served",
                    "evictions");
      out << buf;
      auto line = [&](const char* name, const cache::TierStats& t) {
        std::snprintf(buf, sizeof buf, "  %-8s %10llu %10llu %14llu %10llu\n", name,
                      static_cast<unsigned long long>(t.hits), static_cast<unsigned long long>(t.misses),
                      static_cast<unsigned long long>(t.bytes_served), static_cast<unsigned long long>(t.evictions));
        out << buf;
      };
      line("buffer", s.buffer);
      line("region", s.region);
      line("shared", s.shared);
      line("backend", s.backend);
    }
  }
  if (g.json) out << json{{"files", files}, {"passes", passes}}.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  double scale = 1.0;
  std::vector<int> only;
  std::string scratch;
};

int cmd_bench(const Globals& g, const BenchArgs& a, std::ostream& out) {
  bench::BenchOptions o;
  o.seed = g.seed;
  o.scale = a.scale;
  if (!a.scratch.empty()) o.scratch = a.scratch;
  if (a.scale <= 0) fail(ErrorCode::InvalidConfig, "--scale must be positive");
  for (int id : a.only) {
    if (id < 1 || id > 9) fail(ErrorCode::InvalidConfig, "--only ids are 1..9");
  }
  const auto checks = bench::run_all(o, a.only);
  if (g.json) out << bench::to_json(checks, o).dump(2) << '\n';
  else out << bench::format_table(checks);
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; }) ? 0 : 1;
}

// ---------------------------------------------------------------- info

int cmd_info(const Globals& g, std::ostream& out) {
  engine::Database db(g.root, table_options(g));
  ivm::ViewCatalog catalog(db);
  json j;
  j["root"] = fs::absolute(g.root).lexically_normal().string();
  const char* cache_root = std::getenv(kCacheRootEnv);
  j["cache_root"] = cache_root ? json(cache_root) : json(nullptr);
  json tables = json::array();
  for (const auto& name : db.table_names()) {
    auto& t = db.table(name);
    auto pin = t.oldest_pin();
    tables.push_back({{"name", name},
                      {"dir", t.dir().string()},
                      {"version", t.current_version()},
                      {"staged_rows", t.staged_rows()},
                      {"delta_segments", t.live_segments(engine::SegmentKind::Delta).size()},
                      {"stable_segments", t.live_segments(engine::SegmentKind::Stable).size()},
                      {"oldest_pin", pin ? json(*pin) : json(nullptr)},
                      {"schema", nlohmann::json::parse(engine::schema_to_json(t.def().schema))}});
  }
  j["tables"] = tables;
  j["views"] = catalog.names();
  if (g.json) {
    out << j.dump(2) << '\n';
    return 0;
  }
  out << "root: " << j["root"].get<std::string>() << '\n';
  out << "cache root: " << (cache_root ? cache_root : std::string("(unset; ") + kCacheRootEnv + ")") << '\n';
  for (const auto& t : tables) {
    out << "table " << t["name"].get<std::string>() << ": version " << t["version"] << ", " << t["staged_rows"]
        << " staged rows, " << t["delta_segments"] << " delta + " << t["stable_segments"] << " stable segments\n";
  }
  for (const auto& v : catalog.names()) out << "view " << v << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"minihouse: columnar storage, incremental views and hybrid search"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_config("--config", "minihouse.toml", "defaults file (TOML key = value; [subcommand] sections)");
  Globals g;
  app.add_option("--root", g.root, "database root directory")->capture_default_str();
  app.add_flag("--json", g.json, "machine-readable output");
  app.add_option("--seed", g.seed, "seed for any randomized work")->capture_default_str();
  app.add_flag("--no-sync", g.no_sync, "skip fsync of the write-ahead log");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "load JSON-lines rows into a table");
  c_ingest->add_option("--table", ingest.table)->required();
  c_ingest->add_option("--input", ingest.input, "JSON-lines file")->required();
  c_ingest->add_option("--schema", ingest.schema, "schema JSON, needed when the table is new");
  c_ingest->add_option("--batch", ingest.batch, "rows per commit")->capture_default_str()->check(CLI::PositiveNumber);
  c_ingest->add_flag("--no-flush", ingest.no_flush, "leave rows in the staging area");

  QueryArgs query;
  auto* c_query = app.add_subcommand("query", "hybrid vector and text search with an optional label join");
  c_query->add_option("--table", query.table)->required();
  c_query->add_option("--vector-file", query.vector_file, "JSON array query vector");
  c_query->add_option("--vector", query.vector, "comma-separated query vector");
  c_query->add_option("--terms", query.terms, "space-separated text terms");
  c_query->add_option("--fusion", query.fusion, "rrf or score")->capture_default_str();
  c_query->add_option("--rrf-k", query.rrf_k)->capture_default_str();
  c_query->add_option("--weights", query.weights, "comma-separated leg weights for score fusion");
  c_query->add_option("--topk", query.topk)->capture_default_str();
  c_query->add_option("--join", query.join, "label table");
  c_query->add_option("--where", query.where, "predicate on the label rows");
  c_query->add_option("--key", query.key, "join column")->capture_default_str();
  c_query->add_option("--vector-column", query.vector_column)->capture_default_str();
  c_query->add_option("--text-column", query.text_column)->capture_default_str();
  c_query->add_option("--runtime-filter", query.runtime_filter, "auto, on or off")->capture_default_str();

  LookupArgs lookup;
  std::uint64_t lookup_version = 0;
  auto* c_lookup = app.add_subcommand("lookup", "point lookup by (document_id, chunk_id)");
  c_lookup->add_option("--table", lookup.table)->required();
  c_lookup->add_option("--doc", lookup.doc)->required();
  c_lookup->add_option("--chunk", lookup.chunk)->capture_default_str();
  auto* o_version = c_lookup->add_option("--version", lookup_version, "snapshot version (latest by default)");

  CompactArgs compact;
  auto* c_compact = app.add_subcommand("compact", "run compaction controller ticks");
  c_compact->add_option("--table", compact.table)->required();
  c_compact->add_option("--ticks", compact.ticks)->capture_default_str();
  c_compact->add_option("--n-star", compact.n_star)->capture_default_str();
  c_compact->add_option("--k", compact.k)->capture_default_str();
  c_compact->add_option("--max-batch", compact.max_batch)->capture_default_str();
  c_compact->add_option("--base-period", compact.base_period)->capture_default_str();
  c_compact->add_flag("--flush", compact.flush, "flush the staging area first");

  ViewArgs view;
  auto* c_view = app.add_subcommand("view", "materialized views");
  c_view->require_subcommand(1);
  c_view->fallthrough();
  auto* v_create = c_view->add_subcommand("create", "create a view from a definition file");
  v_create->add_option("--file", view.file)->required();
  auto* v_refresh = c_view->add_subcommand("refresh", "bring a view up to date");
  v_refresh->add_option("--name", view.name)->required();
  v_refresh->add_option("--interval", view.interval, "'auto' prints the next refresh interval computation");
  v_refresh->add_option("--util", view.util, "cluster utilization in [0, 1]")->capture_default_str();
  v_refresh->add_option("--history", view.history, "comma-separated refresh costs in seconds (recorded ones by default)");
  v_refresh->add_option("--source", view.source, "avg or last")->capture_default_str();
  v_refresh->add_option("--k", view.k)->capture_default_str();
  v_refresh->add_option("--dt-min", view.dt_min)->capture_default_str();
  v_refresh->add_option("--dt-base", view.dt_base)->capture_default_str();
  v_refresh->add_option("--alpha", view.alpha)->capture_default_str();
  v_refresh->add_option("--window", view.window)->capture_default_str();
  auto* v_show = c_view->add_subcommand("show", "print view rows");
  v_show->add_option("--name", view.name)->required();
  auto* v_list = c_view->add_subcommand("list", "list views");
  auto* v_drop = c_view->add_subcommand("drop", "drop a view");
  v_drop->add_option("--name", view.name)->required();

  FsckArgs fsck;
  auto* c_fsck = app.add_subcommand("fsck", "verify file integrity (exit 2 on corruption)");
  auto* o_file = c_fsck->add_option("--file", fsck.file, "a single columnar file");
  auto* o_table = c_fsck->add_option("--table", fsck.table, "every live segment of a table");
  o_file->excludes(o_table);
  c_fsck->require_option(1);

  CacheArgs cache;
  auto* c_cache = app.add_subcommand("cache-stats", "read files through the cache and print per-tier counters");
  c_cache->add_option("--cache-root", cache.cache_root, std::string("backend directory (default $") + kCacheRootEnv + ")");
  c_cache->add_option("--file", cache.files, "files to read, relative to the cache root (all by default)");
  c_cache->add_option("--block-mb", cache.block_mb)->capture_default_str()->check(CLI::PositiveNumber);
  c_cache->add_option("--chunk-mb", cache.chunk_mb)->capture_default_str()->check(CLI::PositiveNumber);
  c_cache->add_option("--region-kb", cache.region_kb)->capture_default_str()->check(CLI::PositiveNumber);
  c_cache->add_option("--segment-kb", cache.segment_kb)->capture_default_str()->check(CLI::PositiveNumber);
  c_cache->add_option("--request-kb", cache.request_kb, "request size")->capture_default_str();
  c_cache->add_option("--passes", cache.passes)->capture_default_str();
  c_cache->add_option("--random", cache.random_reads, "random ranges per file instead of a sequential sweep");
  c_cache->add_option("--nodes", cache.nodes)->capture_default_str()->check(CLI::PositiveNumber);

  BenchArgs benchargs;
  auto* c_bench = app.add_subcommand("bench", "run the acceptance workloads");
  c_bench->add_option("--scale", benchargs.scale, "trial count multiplier")->capture_default_str();
  c_bench->add_option("--only", benchargs.only, "check ids to run")->delimiter(',');
  c_bench->add_option("--scratch", benchargs.scratch, "scratch directory");

  auto* c_info = app.add_subcommand("info", "list tables, views and state locations");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*c_ingest) return cmd_ingest(g, ingest, out);
    if (*c_query) return cmd_query(g, query, out);
    if (*c_lookup) {
      if (*o_version) lookup.version = lookup_version;
      return cmd_lookup(g, lookup, out);
    }
    if (*c_compact) return cmd_compact(g, compact, out);
    if (*c_view) {
      const char* action = *v_create ? "create" : *v_refresh ? "refresh" : *v_show ? "show" : *v_list ? "list" : "drop";
      return cmd_view(g, action, view, out);
    }
    if (*c_fsck) return cmd_fsck(g, fsck, out);
    if (*c_cache) return cmd_cache_stats(g, cache, out);
    if (*c_bench) return cmd_bench(g, benchargs, out);
    if (*c_info) return cmd_info(g, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_corruption(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace minihouse::cli
