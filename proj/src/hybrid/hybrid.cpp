#include "minihouse/hybrid/hybrid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "minihouse/common/error.hpp"

namespace minihouse::hybrid {

std::size_t Relation::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  fail(ErrorCode::UnknownColumn, "no column '" + name + "'");
}

void sort_ranked(std::vector<RankedEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.row < b.row;
  });
}

namespace {

void truncate(std::vector<RankedEntry>& e, std::size_t k) {
  if (k && e.size() > k) e.resize(k);
}

std::uint64_t key_hash(const Value& v) {
  // -0.0 and 0.0 must land on the same bits.
  if (const auto* d = std::get_if<double>(&v); d && *d == 0) return hash_value(Value(0.0));
  return hash_value(v);
}

bool passes(const std::optional<LegFilter>& f, const Row& row) {
  return !f || !f->filter || f->filter->contains(row[f->key_column]);
}

}  // namespace

// ---------------------------------------------------------------- runtime filters

bool RuntimeFilter::contains(const Value& key) const noexcept {
  if (is_null(key)) return false;
  if (kind_ == RuntimeFilterKind::Bitmap) {
    const auto* i = std::get_if<std::int64_t>(&key);
    if (!i || *i < base_) return false;
    const auto off = static_cast<std::uint64_t>(*i) - static_cast<std::uint64_t>(base_);
    return off < bits_.size() && bits_[off];
  }
  if (const auto* d = std::get_if<double>(&key); d && std::isnan(*d)) return false;
  return bloom_.may_contain(key_hash(key));
}

RuntimeFilter RuntimeFilter::bloom(const std::vector<Value>& keys, double fpr) {
  if (!(fpr > 0 && fpr < 1)) fail(ErrorCode::InvalidConfig, "bloom false-positive rate must be in (0, 1)");
  RuntimeFilter f;
  f.kind_ = RuntimeFilterKind::Bloom;
  f.bloom_ = BloomFilter::with_fpr(std::max<std::size_t>(keys.size(), 1), fpr);
  for (const auto& k : keys) {
    if (is_null(k)) continue;
    f.bloom_.insert(key_hash(k));
    ++f.build_keys_;
  }
  return f;
}

RuntimeFilter RuntimeFilter::bitmap(const std::vector<Value>& keys) {
  RuntimeFilter f;
  f.kind_ = RuntimeFilterKind::Bitmap;
  std::optional<std::int64_t> lo, hi;
  for (const auto& k : keys) {
    if (is_null(k)) continue;
    const auto* i = std::get_if<std::int64_t>(&k);
    if (!i) fail(ErrorCode::DomainTooLarge, "bitmap filter needs int64 keys, got " + format_value(k));
    lo = lo ? std::min(*lo, *i) : *i;
    hi = hi ? std::max(*hi, *i) : *i;
  }
  if (!lo) return f;
  const auto span = static_cast<std::uint64_t>(*hi) - static_cast<std::uint64_t>(*lo);
  if (span >= kMaxBitmapDomain) {
    fail(ErrorCode::DomainTooLarge, "key span " + std::to_string(span) + " exceeds bitmap domain");
  }
  f.base_ = *lo;
  f.bits_.assign(span + 1, false);
  for (const auto& k : keys) {
    if (is_null(k)) continue;
    f.bits_[static_cast<std::uint64_t>(std::get<std::int64_t>(k)) - static_cast<std::uint64_t>(*lo)] = true;
    ++f.build_keys_;
  }
  return f;
}

RuntimeFilter build_runtime_filter(const Relation& rel, const std::string& key_column, RuntimeFilterKind kind,
                                   double fpr) {
  const auto c = rel.column(key_column);
  std::vector<Value> keys;
  keys.reserve(rel.rows.size());
  for (const auto& r : rel.rows) keys.push_back(r[c]);
  return kind == RuntimeFilterKind::Bitmap ? RuntimeFilter::bitmap(keys) : RuntimeFilter::bloom(keys, fpr);
}

// ---------------------------------------------------------------- retrieval legs

RankedList vector_topk(const FloatVector& query, const Relation& rel, const std::string& vector_column, std::size_t k,
                       std::optional<LegFilter> filter, LegCounters* counters) {
  RankedList out;
  out.modality = "vector";
  const auto c = rel.column(vector_column);
  double qn = 0;
  for (float x : query) qn += static_cast<double>(x) * x;
  if (query.empty() || qn == 0) fail(ErrorCode::DimensionMismatch, "query vector is empty or zero");
  LegCounters local;
  for (std::size_t i = 0; i < rel.rows.size(); ++i) {
    const auto& row = rel.rows[i];
    ++local.rows_seen;
    if (!passes(filter, row)) continue;
    const auto* v = std::get_if<FloatVector>(&row[c]);
    if (!v) continue;
    if (v->size() != query.size()) {
      fail(ErrorCode::DimensionMismatch, "row " + std::to_string(i) + " has dimension " + std::to_string(v->size()) +
                                             ", query has " + std::to_string(query.size()));
    }
    ++local.rows_scored;
    double dot = 0, vn = 0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      dot += static_cast<double>(query[j]) * (*v)[j];
      vn += static_cast<double>((*v)[j]) * (*v)[j];
    }
    if (vn == 0) continue;
    out.entries.push_back({i, dot / std::sqrt(qn * vn)});
  }
  sort_ranked(out.entries);
  truncate(out.entries, k);
  if (counters) {
    counters->rows_seen += local.rows_seen;
    counters->rows_scored += local.rows_scored;
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

RankedList text_topk(const std::vector<std::string>& terms, const Relation& rel, const std::string& text_column,
                     std::size_t k, std::optional<LegFilter> filter, LegCounters* counters) {
  RankedList out;
  out.modality = "text";
  const auto c = rel.column(text_column);
  std::set<std::string> wanted;
  for (const auto& t : terms) {
    for (auto& tok : tokenize(t)) wanted.insert(std::move(tok));
  }
  if (wanted.empty()) fail(ErrorCode::InvalidConfig, "text retrieval needs at least one term");
  LegCounters local;
  for (std::size_t i = 0; i < rel.rows.size(); ++i) {
    const auto& row = rel.rows[i];
    ++local.rows_seen;
    if (!passes(filter, row)) continue;
    const auto* s = std::get_if<std::string>(&row[c]);
    if (!s) continue;
    ++local.rows_scored;
    std::uint64_t score = 0;
    for (const auto& tok : tokenize(*s)) score += wanted.count(tok);
    if (score) out.entries.push_back({i, static_cast<double>(score)});
  }
  sort_ranked(out.entries);
  truncate(out.entries, k);
  if (counters) {
    counters->rows_seen += local.rows_seen;
    counters->rows_scored += local.rows_scored;
  }
  return out;
}

// ---------------------------------------------------------------- fusion

void FusionSpec::validate() const {
  if (!(rrf_k > 0)) fail(ErrorCode::InvalidConfig, "rrf k must be positive");
  if (top_k < 1) fail(ErrorCode::InvalidConfig, "top K must be at least 1");
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) fail(ErrorCode::InvalidConfig, "fusion weights must be finite and >= 0");
  }
}

RankedList fuse_score(const std::vector<RankedList>& lists, const std::vector<double>& weights, std::size_t k) {
  if (weights.size() != lists.size()) {
    fail(ErrorCode::InvalidConfig, std::to_string(weights.size()) + " weights for " + std::to_string(lists.size()) + " lists");
  }
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0)) fail(ErrorCode::InvalidConfig, "fusion weights must be >= 0");
    total += w;
  }
  if (!(total > 0) && !lists.empty()) fail(ErrorCode::InvalidConfig, "fusion weights sum to zero");
  std::map<std::uint64_t, double> fused;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& e = lists[i].entries;
    if (e.empty()) continue;
    double lo = e[0].score, hi = e[0].score;
    for (const auto& x : e) {
      lo = std::min(lo, x.score);
      hi = std::max(hi, x.score);
    }
    const double w = weights[i] / total;
    for (const auto& x : e) {
      const double norm = hi == lo ? 1.0 : (x.score - lo) / (hi - lo);
      fused[x.row] += w * norm;
    }
  }
  RankedList out;
  out.modality = "fused";
  for (const auto& [row, s] : fused) out.entries.push_back({row, s});
  sort_ranked(out.entries);
  truncate(out.entries, k);
  return out;
}

RankedList fuse_rrf(const std::vector<RankedList>& lists, double rrf_k, std::size_t k) {
  if (!(rrf_k > 0)) fail(ErrorCode::InvalidConfig, "rrf k must be positive");
  // Per row, terms are added in list order so the sum is reproducible.
  std::map<std::uint64_t, double> fused;
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < l.entries.size(); ++r) {
      fused[l.entries[r].row] += 1.0 / (rrf_k + static_cast<double>(r + 1));
    }
  }
  RankedList out;
  out.modality = "rrf";
  for (const auto& [row, s] : fused) out.entries.push_back({row, s});
  sort_ranked(out.entries);
  truncate(out.entries, k);
  return out;
}

RankedList fuse(const std::vector<RankedList>& lists, const FusionSpec& spec) {
  spec.validate();
  if (spec.mode == FusionMode::Rrf) return fuse_rrf(lists, spec.rrf_k, spec.top_k);
  auto w = spec.weights;
  if (w.empty()) w.assign(lists.size(), 1.0);
  return fuse_score(lists, w, spec.top_k);
}

// ---------------------------------------------------------------- hybrid execution

namespace {

struct LabelMatches {
  std::map<Value, std::vector<std::size_t>, ValueLess> by_key;  // surviving label rows per key
  std::size_t passing = 0;
};

Value norm_key(const Value& v) {
  if (const auto* d = std::get_if<double>(&v); d && *d == 0) return 0.0;
  return v;
}

bool usable_key(const Value& v) {
  if (is_null(v)) return false;
  if (const auto* d = std::get_if<double>(&v)) return !std::isnan(*d);
  return true;
}

LabelMatches filter_labels(const Relation& labels, const HybridQuery& q) {
  LabelMatches m;
  const auto key = labels.column(q.label_key);
  std::vector<std::pair<std::size_t, const Comparison*>> preds;
  for (const auto& c : q.label_predicate) preds.push_back({labels.column(c.column), &c});
  for (std::size_t i = 0; i < labels.rows.size(); ++i) {
    const auto& row = labels.rows[i];
    bool ok = true;
    for (const auto& [col, c] : preds) ok = ok && eval_cmp(row[col], c->op, c->literal);
    if (!ok) continue;
    ++m.passing;
    if (usable_key(row[key])) m.by_key[norm_key(row[key])].push_back(i);
  }
  return m;
}

std::vector<RankedList> retrieve(const Relation& docs, const HybridQuery& q, std::optional<LegFilter> filter,
                                 LegCounters* counters) {
  std::vector<RankedList> lists;
  if (q.vector) lists.push_back(vector_topk(*q.vector, docs, q.vector_column, 0, filter, counters));
  if (!q.terms.empty()) lists.push_back(text_topk(q.terms, docs, q.text_column, 0, filter, counters));
  if (lists.empty()) fail(ErrorCode::InvalidConfig, "hybrid query needs a vector, terms, or both");
  return lists;
}

// Keeps entries whose document joins a surviving label; ranks close up behind removed entries.
std::uint64_t refine(std::vector<RankedList>& lists, const Relation& docs, std::size_t doc_key, const LabelMatches& m) {
  std::uint64_t kept = 0;
  for (auto& l : lists) {
    std::vector<RankedEntry> out;
    for (const auto& e : l.entries) {
      const auto& k = docs.rows[e.row][doc_key];
      if (usable_key(k) && m.by_key.count(norm_key(k))) out.push_back(e);
    }
    kept += out.size();
    l.entries = std::move(out);
  }
  return kept;
}

HybridResult assemble(const Relation& docs, const Relation& labels, std::size_t doc_key, const LabelMatches& m,
                      RankedList fused) {
  HybridResult r;
  r.columns = docs.columns;
  r.columns.insert(r.columns.end(), labels.columns.begin(), labels.columns.end());
  for (const auto& e : fused.entries) {
    const auto& d = docs.rows[e.row];
    for (auto li : m.by_key.at(norm_key(d[doc_key]))) {
      Row row = d;
      row.insert(row.end(), labels.rows[li].begin(), labels.rows[li].end());
      r.rows.push_back(std::move(row));
      r.row_scores.push_back(e.score);
    }
  }
  r.fused = std::move(fused);
  return r;
}

}  // namespace

HybridResult execute_hybrid(const Relation& docs, const Relation& labels, const HybridQuery& q) {
  q.fusion.validate();
  const auto doc_key = docs.column(q.doc_key);
  const auto m = filter_labels(labels, q);
  HybridStats st;
  st.selectivity = labels.rows.empty() ? 0 : static_cast<double>(m.passing) / static_cast<double>(labels.rows.size());
  const bool build = q.runtime_filter == FilterMode::On ||
                     (q.runtime_filter == FilterMode::Auto && st.selectivity < q.selectivity_threshold);
  std::optional<RuntimeFilter> rf;
  if (build) {
    std::vector<Value> keys;
    for (const auto& [k, _] : m.by_key) keys.push_back(k);
    try {
      rf = RuntimeFilter::bitmap(keys);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DomainTooLarge) throw;
      rf = RuntimeFilter::bloom(keys, q.bloom_fpr);
    }
    st.filter_built = true;
    st.filter_kind = rf->kind();
  }
  LegCounters counters;
  std::optional<LegFilter> lf;
  if (rf) lf = LegFilter{&*rf, doc_key};
  auto lists = retrieve(docs, q, lf, &counters);
  st.rows_scored = counters.rows_scored;
  st.candidates = refine(lists, docs, doc_key, m);
  auto r = assemble(docs, labels, doc_key, m, fuse(lists, q.fusion));
  r.stats = st;
  return r;
}

HybridResult execute_hybrid_unoptimized(const Relation& docs, const Relation& labels, const HybridQuery& q) {
  q.fusion.validate();
  const auto doc_key = docs.column(q.doc_key);
  LegCounters counters;
  auto lists = retrieve(docs, q, std::nullopt, &counters);
  const auto m = filter_labels(labels, q);
  HybridStats st;
  st.selectivity = labels.rows.empty() ? 0 : static_cast<double>(m.passing) / static_cast<double>(labels.rows.size());
  st.rows_scored = counters.rows_scored;
  st.candidates = refine(lists, docs, doc_key, m);
  auto r = assemble(docs, labels, doc_key, m, fuse(lists, q.fusion));
  r.stats = st;
  return r;
}

}  // namespace minihouse::hybrid
