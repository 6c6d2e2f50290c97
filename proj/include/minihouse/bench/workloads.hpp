#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "minihouse/hybrid/hybrid.hpp"

// Acceptance workloads. Each check is deterministic in (seed, scale) and reports counters only,
// never timings, so repeated runs produce identical JSON.
namespace minihouse::bench {

struct Check {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
};

struct BenchOptions {
  std::uint64_t seed = 42;
  double scale = 1.0;              // multiplies trial counts; 1.0 is the full acceptance size
  std::filesystem::path scratch;   // temp directory for on-disk workloads; created when empty

  std::size_t scaled(std::size_t full, std::size_t floor = 1) const {
    const auto n = static_cast<std::size_t>(static_cast<double>(full) * scale + 0.5);
    return n < floor ? floor : n;
  }
};

Check check_format_roundtrip(const BenchOptions& o);   // 1
Check check_lookup_io(const BenchOptions& o);          // 2
Check check_intensity(const BenchOptions& o);          // 3
Check check_compaction(const BenchOptions& o);         // 4
Check check_ivm(const BenchOptions& o);                // 5
Check check_refresh_controller(const BenchOptions& o); // 6
Check check_fusion(const BenchOptions& o);             // 7
Check check_hybrid_plan(const BenchOptions& o);        // 8
Check check_cache(const BenchOptions& o);              // 9

// Ids 1..9 in order. `only` restricts to the listed ids when non-empty.
std::vector<Check> run_all(const BenchOptions& o, const std::vector<int>& only = {});

nlohmann::ordered_json to_json(const std::vector<Check>& checks, const BenchOptions& o);
std::string format_table(const std::vector<Check>& checks);

// ---- IVM workload pieces, exposed for unit tests

struct IvmWorkloadResult {
  std::string plan;
  std::uint64_t refreshes = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t output_rows = 0;
  std::string first_mismatch;
};

// One randomized workload: two tables of at most 500 rows, a plan drawn from the template set,
// four delta rounds (each at most 20% of a table) interleaved with flushes and merges. The view
// is compared with a brute-force evaluation after every refresh.
IvmWorkloadResult run_ivm_workload(std::uint64_t seed, const std::filesystem::path& dir);

struct WorkBound {
  double update_ratio = 0;
  std::uint64_t incremental_rows = 0;  // delta rows plus probe rows
  std::uint64_t full_scan_rows = 0;
  double ratio() const { return full_scan_rows ? static_cast<double>(incremental_rows) / full_scan_rows : 0; }
};

// orders(4000) joined to customers(1000), filtered and summed by region; `update_ratio` of the
// orders rows are rewritten before one incremental refresh.
WorkBound measure_ivm_work(double update_ratio, std::uint64_t seed, const std::filesystem::path& dir);

// ---- hybrid corpora

struct HybridCorpus {
  hybrid::Relation docs;    // document_id, chunk_id, ext, body, emb
  hybrid::Relation labels;  // document_id, chunk_id, ext, tag
  hybrid::HybridQuery query;
};

// `selective_fraction` of documents carry the tag 'doc_image'; the query filters on it. String
// join keys (column ext) are used when `string_keys` is set, int64 document ids otherwise.
HybridCorpus make_hybrid_corpus(std::uint64_t seed, std::size_t docs, double selective_fraction, bool string_keys);

}  // namespace minihouse::bench
