#include <gtest/gtest.h>

#include <random>
#include <set>

#include "minihouse/bench/oracles.hpp"
#include "minihouse/bench/workloads.hpp"
#include "minihouse/common/error.hpp"
#include "minihouse/hybrid/hybrid.hpp"

using namespace minihouse;
using namespace minihouse::hybrid;

namespace {

template <class Fn>
void expect_code(ErrorCode code, Fn&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

std::vector<std::uint64_t> ids(const RankedList& l) {
  std::vector<std::uint64_t> out;
  for (const auto& e : l.entries) out.push_back(e.row);
  return out;
}

Relation vectors(const std::vector<FloatVector>& vs) {
  Relation r;
  r.columns = {"id", "emb"};
  for (std::size_t i = 0; i < vs.size(); ++i) r.rows.push_back({static_cast<std::int64_t>(i), vs[i]});
  return r;
}

}  // namespace

TEST(RuntimeFilter, NoFalseNegativesAndBitmapExact) {
  std::vector<Value> keys;
  for (std::int64_t i = 0; i < 1024; i += 3) keys.push_back(i);
  auto bm = RuntimeFilter::bitmap(keys);
  auto bl = RuntimeFilter::bloom(keys, 0.01);
  for (std::int64_t i = 0; i < 1024; ++i) {
    EXPECT_EQ(bm.contains(i), i % 3 == 0);
    if (i % 3 == 0) EXPECT_TRUE(bl.contains(i));
  }
  EXPECT_FALSE(bm.contains(Value{}));
  expect_code(ErrorCode::DomainTooLarge, [] { RuntimeFilter::bitmap({std::int64_t{0}, std::int64_t{1} << 40}); });
  expect_code(ErrorCode::DomainTooLarge, [] { RuntimeFilter::bitmap({Value("x")}); });
}

TEST(RuntimeFilter, BloomFalsePositiveRate) {
  std::mt19937_64 rng(1);
  std::vector<Value> keys;
  for (int i = 0; i < 10000; ++i) keys.push_back(static_cast<std::int64_t>(rng() >> 1));
  auto f = RuntimeFilter::bloom(keys, 0.01);
  int fp = 0;
  for (int i = 0; i < 10000; ++i) fp += f.contains("absent-" + std::to_string(i));
  EXPECT_LE(fp, 200);
}

TEST(VectorTopK, SelfSimilarityAndFilter) {
  auto rel = vectors({{1, 0}, {0.6f, 0.8f}, {0.8f, 0.6f}, {-1, 0}});
  auto l = vector_topk({0.6f, 0.8f}, rel, "emb", 2);
  ASSERT_EQ(ids(l), (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(l.entries[0].score, 1.0);
  std::vector<Value> keep{std::int64_t{0}, std::int64_t{2}, std::int64_t{3}};
  auto f = RuntimeFilter::bitmap(keep);
  auto filtered = vector_topk({0.6f, 0.8f}, rel, "emb", 0, LegFilter{&f, 0});
  EXPECT_EQ(ids(filtered), (std::vector<std::uint64_t>{2, 0, 3}));
  expect_code(ErrorCode::DimensionMismatch, [&] { vector_topk({1, 2, 3}, rel, "emb", 1); });
}

TEST(VectorTopK, MatchesIndependentResort) {
  std::mt19937_64 rng(4);
  std::vector<FloatVector> vs;
  for (int i = 0; i < 300; ++i) vs.push_back({static_cast<float>(rng() % 5), static_cast<float>(rng() % 5) - 2, 1});
  auto rel = vectors(vs);
  const FloatVector q{1, 1, 0.5f};
  auto got = vector_topk(q, rel, "emb", 25);
  std::vector<std::pair<long double, std::uint64_t>> all;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    long double dot = 0, n = 0, qn = 0;
    for (int j = 0; j < 3; ++j) {
      dot += static_cast<long double>(q[j]) * vs[i][j];
      n += static_cast<long double>(vs[i][j]) * vs[i][j];
      qn += static_cast<long double>(q[j]) * q[j];
    }
    all.push_back({dot / std::sqrt(n * qn), i});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_NEAR(got.entries[i].score, static_cast<double>(all[i].first), 1e-12);
    EXPECT_NEAR(static_cast<double>(all[i].first), got.entries[i].score, 1e-12);
  }
}

TEST(TextTopK, ScoreFormulaCaseAndEmpty) {
  Relation r;
  r.columns = {"id", "body"};
  r.rows = {{std::int64_t{0}, "Red lake"}, {std::int64_t{1}, "red, RED stone lake"}, {std::int64_t{2}, "blue"},
            {std::int64_t{3}, Value{}}};
  auto l = text_topk({"red", "Lake"}, r, "body", 10);
  ASSERT_EQ(ids(l), (std::vector<std::uint64_t>{1, 0}));
  EXPECT_EQ(l.entries[0].score, 3.0);
  EXPECT_EQ(l.entries[1].score, 2.0);
  EXPECT_TRUE(text_topk({"green"}, r, "body", 10).entries.empty());
  EXPECT_EQ(ids(text_topk({"RED"}, r, "body", 10)), ids(text_topk({"red"}, r, "body", 10)));
  EXPECT_EQ(tokenize("A-b_c9 x"), (std::vector<std::string>{"a", "b", "c9", "x"}));
}

TEST(Fusion, ScoreExamples) {
  RankedList one{"a", {{5, 3.0}, {2, 2.0}, {9, 1.0}}};
  EXPECT_EQ(ids(fuse_score({one}, {1.0}, 10)), (std::vector<std::uint64_t>{5, 2, 9}));
  RankedList a{"a", {{7, 1.0}, {3, 0.0}}}, b{"b", {{3, 1.0}, {7, 0.0}}};
  auto f = fuse_score({a, b}, {0.5, 0.5}, 10);
  EXPECT_EQ(ids(f), (std::vector<std::uint64_t>{3, 7}));
  EXPECT_EQ(f.entries[0].score, 0.5);
  RankedList flat{"c", {{1, 4.0}, {2, 4.0}}};
  auto g = fuse_score({flat}, {2.0}, 10);
  EXPECT_EQ(g.entries[0].score, 1.0);
  EXPECT_EQ(g.entries[1].score, 1.0);
  expect_code(ErrorCode::InvalidConfig, [&] { fuse_score({a, b}, {1.0}, 10); });
}

TEST(Fusion, RrfExamples) {
  RankedList a{"a", {{4, 9.0}, {1, 8.0}, {8, 7.0}}}, b{"b", {{4, 0.3}}};
  auto f = fuse_rrf({a, b}, 60, 10);
  EXPECT_NEAR(f.entries[0].score, 2.0 / 61, 1e-12);
  EXPECT_EQ(f.entries[0].row, 4u);
  EXPECT_NEAR(f.entries.back().score, 1.0 / 63, 1e-12);
  auto doubled = a;
  for (auto& e : doubled.entries) e.score *= 2;
  EXPECT_EQ(fuse_rrf({doubled, b}, 60, 10).entries, f.entries);
  expect_code(ErrorCode::InvalidConfig, [&] { fuse_rrf({a}, 0, 10); });
}

TEST(Hybrid, RuntimeFilterIsSoundOnRandomCorpora) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto c = bench::make_hybrid_corpus(seed, 40 + seed * 3, seed % 2 ? 0.04 : 0.5, seed % 3 == 0);
    auto q = c.query;
    q.runtime_filter = FilterMode::On;
    auto on = execute_hybrid(c.docs, c.labels, q);
    q.runtime_filter = FilterMode::Off;
    auto off = execute_hybrid(c.docs, c.labels, q);
    auto ref = bench::hybrid_reference(c.docs, c.labels, q);
    ASSERT_EQ(on.rows.size(), ref.size()) << seed;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ASSERT_TRUE(bit_equal(on.rows[i], ref[i])) << seed << " row " << i;
      ASSERT_TRUE(bit_equal(off.rows[i], ref[i])) << seed << " row " << i;
    }
    EXPECT_LE(on.stats.rows_scored, off.stats.rows_scored);
  }
}

TEST(Hybrid, SelectiveLabelsCutScoredRows) {
  for (bool string_keys : {false, true}) {
    auto c = bench::make_hybrid_corpus(9, 5000, 0.008, string_keys);
    auto q = c.query;
    q.vector = FloatVector{1, 0, 0, 0, 0, 0, 0, 1};
    q.terms = {"lake"};
    auto on = execute_hybrid(c.docs, c.labels, q);
    q.runtime_filter = FilterMode::Off;
    auto off = execute_hybrid(c.docs, c.labels, q);
    ASSERT_TRUE(on.stats.filter_built);
    EXPECT_EQ(*on.stats.filter_kind, string_keys ? RuntimeFilterKind::Bloom : RuntimeFilterKind::Bitmap);
    EXPECT_GE(off.stats.rows_scored, 10 * on.stats.rows_scored);
  }
}

TEST(Hybrid, KBeyondCandidatesReturnsAll) {
  auto c = bench::make_hybrid_corpus(3, 30, 1.0, false);
  auto q = c.query;
  q.fusion.top_k = 1000;
  auto r = execute_hybrid(c.docs, c.labels, q);
  std::set<std::uint64_t> expected;
  std::set<Value, ValueLess> tagged;
  for (const auto& l : c.labels.rows) {
    if (std::get<std::string>(l[3]) == "doc_image") tagged.insert(l[0]);
  }
  if (q.vector) {
    for (const auto& e : vector_topk(*q.vector, c.docs, "emb", 0).entries) {
      if (tagged.count(c.docs.rows[e.row][0])) expected.insert(e.row);
    }
  }
  if (!q.terms.empty()) {
    for (const auto& e : text_topk(q.terms, c.docs, "body", 0).entries) {
      if (tagged.count(c.docs.rows[e.row][0])) expected.insert(e.row);
    }
  }
  ASSERT_FALSE(expected.empty());
  EXPECT_EQ(r.fused.entries.size(), expected.size());
  q.fusion.top_k = 0;
  expect_code(ErrorCode::InvalidConfig, [&] { execute_hybrid(c.docs, c.labels, q); });
}
