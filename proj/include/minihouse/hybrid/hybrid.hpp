#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minihouse/common/bloom.hpp"
#include "minihouse/common/predicate.hpp"
#include "minihouse/common/value.hpp"

namespace minihouse::hybrid {

// Rows of one table at one snapshot. A row id is the row's position in `rows`.
struct Relation {
  std::vector<std::string> columns;
  std::vector<Row> rows;

  std::size_t column(const std::string& name) const;  // UnknownColumn
};

struct RankedEntry {
  std::uint64_t row = 0;
  double score = 0;
  bool operator==(const RankedEntry&) const = default;
};

// Sorted by score descending, ties by ascending row id. Rank of entries[i] is i + 1.
struct RankedList {
  std::string modality;
  std::vector<RankedEntry> entries;
};

void sort_ranked(std::vector<RankedEntry>& entries);

enum class RuntimeFilterKind { Bloom, Bitmap };

// Membership over join-key values. Never a false negative; bitmap membership is exact.
class RuntimeFilter {
 public:
  RuntimeFilterKind kind() const noexcept { return kind_; }
  bool contains(const Value& key) const noexcept;
  std::size_t build_keys() const noexcept { return build_keys_; }

  static RuntimeFilter bloom(const std::vector<Value>& keys, double fpr);
  // Int64 keys only, with max - min below kMaxBitmapDomain; DomainTooLarge otherwise.
  static RuntimeFilter bitmap(const std::vector<Value>& keys);

 private:
  RuntimeFilterKind kind_ = RuntimeFilterKind::Bloom;
  BloomFilter bloom_;
  std::int64_t base_ = 0;
  std::vector<bool> bits_;
  std::size_t build_keys_ = 0;
};

inline constexpr std::uint64_t kMaxBitmapDomain = std::uint64_t{1} << 24;

RuntimeFilter build_runtime_filter(const Relation& rel, const std::string& key_column, RuntimeFilterKind kind,
                                   double fpr = 0.01);

// Which rows a retrieval leg may score.
struct LegFilter {
  const RuntimeFilter* filter = nullptr;
  std::size_t key_column = 0;
};

struct LegCounters {
  std::uint64_t rows_seen = 0;
  std::uint64_t rows_scored = 0;  // rows whose score was computed
};

// Exact cosine top-K over rows holding a vector; NULL vectors and zero vectors are skipped.
// `k` of 0 returns every scored row. DimensionMismatch when a stored vector disagrees in length.
RankedList vector_topk(const FloatVector& query, const Relation& rel, const std::string& vector_column, std::size_t k,
                       std::optional<LegFilter> filter = std::nullopt, LegCounters* counters = nullptr);

// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(const std::string& text);

// Score = total occurrences of the query terms in the row's tokens; zero-score rows dropped.
RankedList text_topk(const std::vector<std::string>& terms, const Relation& rel, const std::string& text_column,
                     std::size_t k, std::optional<LegFilter> filter = std::nullopt, LegCounters* counters = nullptr);

enum class FusionMode { Score, Rrf };

struct FusionSpec {
  FusionMode mode = FusionMode::Rrf;
  std::vector<double> weights;  // score mode; normalized to sum 1, equal weights when empty
  double rrf_k = 60;
  std::size_t top_k = 10;

  void validate() const;  // InvalidConfig
};

// Min-max normalized, weighted sum; a constant-score list normalizes to 1.0.
RankedList fuse_score(const std::vector<RankedList>& lists, const std::vector<double>& weights, std::size_t k);
// Sum of 1 / (rrf_k + rank) over the lists holding each row.
RankedList fuse_rrf(const std::vector<RankedList>& lists, double rrf_k, std::size_t k);
RankedList fuse(const std::vector<RankedList>& lists, const FusionSpec& spec);

enum class FilterMode { Auto, On, Off };

struct HybridQuery {
  std::optional<FloatVector> vector;
  std::vector<std::string> terms;
  std::string vector_column = "emb";
  std::string text_column = "body";
  std::string doc_key = "document_id";    // join column on the document side
  std::string label_key = "document_id";  // join column on the label side
  Predicate label_predicate;
  FusionSpec fusion;
  FilterMode runtime_filter = FilterMode::Auto;
  double selectivity_threshold = 0.10;
  double bloom_fpr = 0.01;
};

struct HybridStats {
  bool filter_built = false;
  std::optional<RuntimeFilterKind> filter_kind;
  double selectivity = 0;      // label rows passing the predicate / label rows
  std::uint64_t rows_scored = 0;  // summed over both legs
  std::uint64_t candidates = 0;   // leg entries surviving the join refinement
};

struct HybridResult {
  std::vector<std::string> columns;  // document columns then label columns
  std::vector<Row> rows;             // fused order; a document joins every matching label row
  std::vector<double> row_scores;    // fused score of each row
  RankedList fused;                  // row ids refer to the document relation
  HybridStats stats;
};

// Filters labels, optionally pushes a runtime filter on the surviving keys into both legs,
// keeps leg entries whose key joins a surviving label, fuses, keeps the top K and joins.
HybridResult execute_hybrid(const Relation& docs, const Relation& labels, const HybridQuery& q);

// Reference pipeline: retrieve everything, join, filter, fuse, top K.
HybridResult execute_hybrid_unoptimized(const Relation& docs, const Relation& labels, const HybridQuery& q);

}  // namespace minihouse::hybrid
