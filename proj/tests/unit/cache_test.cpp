#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "minihouse/cache/cache.hpp"
#include "test_dir.hpp"

using namespace minihouse;
using namespace minihouse::cache;

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

// Same unit ratios as the defaults, scaled down by 1024.
CacheConfig small_config() {
  CacheConfig c;
  c.block_bytes = 12 * 1024;
  c.chunk_bytes = 4 * 1024;
  c.region_bytes = 1024;
  c.segment_bytes = 128;
  c.region_capacity = 8;
  c.buffer_frames = 16;
  c.node_chunk_capacity = 4;
  return c;
}

Bytes random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

Bytes slice(const Bytes& b, std::uint64_t off, std::uint64_t len) {
  return Bytes(b.begin() + static_cast<std::ptrdiff_t>(off), b.begin() + static_cast<std::ptrdiff_t>(off + len));
}

}  // namespace

TEST(HashRing, PlacementLaws) {
  HashRing ring(64);
  expect_code(ErrorCode::EmptyRing, [&] { ring.place("k"); });
  ring.add_node(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ring.place("key" + std::to_string(i)), 3u);
  for (std::uint32_t n = 0; n < 10; ++n) ring.add_node(n);
  HashRing again(64);
  for (std::uint32_t n = 10; n-- > 0;) again.add_node(n);
  std::vector<std::uint32_t> before;
  std::vector<std::size_t> load(10);
  const int keys = 20000;
  for (int i = 0; i < keys; ++i) {
    before.push_back(ring.place("file-" + std::to_string(i)));
    EXPECT_EQ(before.back(), again.place("file-" + std::to_string(i)));
    ++load[before.back()];
  }
  const double mean = keys / 10.0;
  EXPECT_LT(*std::max_element(load.begin(), load.end()) / mean - 1.0, 0.25);

  ring.remove_node(7);
  int moved = 0;
  for (int i = 0; i < keys; ++i) {
    const auto now = ring.place("file-" + std::to_string(i));
    if (before[i] != 7) EXPECT_EQ(now, before[i]);
    EXPECT_NE(now, 7u);
    moved += now != before[i];
  }
  EXPECT_GE(moved, keys * 5 / 100);
  EXPECT_LE(moved, keys * 15 / 100);
}

TEST(BufferPool, SecondChanceAndPins) {
  BufferPool pool(3);
  for (std::uint64_t i = 0; i < 3; ++i) EXPECT_FALSE(pool.insert({"f", i}, Bytes{1}));
  // All bits set: one full turn clears them, then frame 0 goes.
  auto v = pool.insert({"f", 3}, Bytes{2});
  ASSERT_TRUE(v);
  EXPECT_EQ(v->index, 0u);
  // Touch 1 so 2 is the next victim.
  EXPECT_NE(pool.lookup({"f", 1}), nullptr);
  v = pool.insert({"f", 4}, Bytes{3});
  ASSERT_TRUE(v);
  EXPECT_EQ(v->index, 2u);

  pool.pin({"f", 1});
  pool.pin({"f", 3});
  pool.pin({"f", 4});
  expect_code(ErrorCode::AllPinned, [&] { pool.evict_one(); });
  pool.unpin({"f", 3});
  EXPECT_EQ(pool.evict_one().index, 3u);
  pool.unpin({"f", 1});
  expect_code(ErrorCode::StateInconsistent, [&] { pool.unpin({"f", 1}); });
  expect_code(ErrorCode::NotFound, [&] { pool.unpin({"f", 100}); });
}

TEST(BufferPool, PinnedFramesSurviveChurn) {
  BufferPool pool(8);
  for (std::uint64_t i = 0; i < 8; ++i) pool.insert({"f", i}, Bytes{});
  pool.pin({"f", 2});
  pool.pin({"f", 5});
  for (std::uint64_t i = 8; i < 200; ++i) {
    auto v = pool.insert({"f", i}, Bytes{});
    ASSERT_TRUE(v);
    EXPECT_NE(v->index, 2u);
    EXPECT_NE(v->index, 5u);
  }
  EXPECT_TRUE(pool.contains({"f", 2}));
  EXPECT_TRUE(pool.contains({"f", 5}));
}

TEST(RegionStore, FifoOrderIgnoresHits) {
  RegionStore store(3, 1024);
  for (std::uint64_t r = 0; r < 3; ++r) store.admit("f", r);
  store.admit("f", 0);  // a hit does not move the region
  std::optional<Region> out;
  store.admit("g", 0, &out);
  ASSERT_TRUE(out);
  EXPECT_EQ(out->index, 0u);
  EXPECT_EQ(store.order(), (std::vector<std::pair<std::string, std::uint64_t>>{{"f", 1}, {"f", 2}, {"g", 0}}));
  EXPECT_EQ(store.find("f", 0), nullptr);
  EXPECT_NE(store.find("g", 0), nullptr);
}

TEST(MetaIndex, SerializeRoundTrip) {
  RegionStore store(10, 1024);
  store.admit("a/x", 4).segments[33] = Bytes{1, 2};
  store.admit("b", 0).segments[1] = Bytes{};
  store.admit("a/x", 5);
  const auto j = store.meta().serialize();
  EXPECT_EQ(j.dump().find("\"1,2\""), std::string::npos);
  auto e = MetaIndex::entries(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(std::get<0>(e[0]), "a/x");
  EXPECT_EQ(std::get<1>(e[0]), 4u);
  EXPECT_EQ(std::get<3>(e[0]), (std::vector<std::uint64_t>{33}));
  EXPECT_EQ(std::get<0>(e[1]), "b");
  EXPECT_EQ(std::get<1>(e[2]), 5u);
  expect_code(ErrorCode::ParseError, [] { MetaIndex::entries(nlohmann::json::parse(R"([{"path":1}])")); });
}

TEST(CacheConfig, Divisibility) {
  auto c = small_config();
  c.chunk_bytes = 5000;
  expect_code(ErrorCode::InvalidConfig, [&] { c.validate(); });
  c = small_config();
  c.segment_bytes = 300;
  expect_code(ErrorCode::InvalidConfig, [&] { c.validate(); });
  TestDir dir;
  expect_code(ErrorCode::InvalidConfig, [&] { CachePlane(dir.path(), c); });
}

TEST(CachePlane, ReadsMatchBackendAndBalance) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto a = random_bytes(50'000, 1), b = random_bytes(9'001, 2);
  plane.backend().put("a", a);
  plane.backend().put("d/b", b);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 3000; ++i) {
    const auto& src = i % 3 ? a : b;
    const std::string path = i % 3 ? "a" : "d/b";
    const std::uint64_t off = rng() % (src.size() + 1);
    const std::uint64_t len = rng() % (src.size() - off + 1) % 3000;
    ASSERT_EQ(plane.read_range(path, off, len), slice(src, off, len)) << i;
  }
  EXPECT_TRUE(plane.stats().balanced());
  EXPECT_GT(plane.stats().buffer.hits, 0u);
  EXPECT_GT(plane.stats().region.hits, 0u);
  expect_code(ErrorCode::OutOfRange, [&] { plane.read_range("a", 49'999, 2); });
  expect_code(ErrorCode::NotFound, [&] { plane.read_range("missing", 0, 1); });
}

TEST(CachePlane, WarmReadSkipsBackend) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto a = random_bytes(3000, 3);
  plane.backend().put("a", a);
  EXPECT_EQ(plane.read_range("a", 100, 1500), slice(a, 100, 1500));
  EXPECT_EQ(plane.stats().backend_reads, 1u);
  EXPECT_EQ(plane.stats().coalesced_fetches, 1u);
  EXPECT_EQ(plane.stats().backend.bytes_served, 1500u);
  plane.reset_stats();
  EXPECT_EQ(plane.read_range("a", 100, 1500), slice(a, 100, 1500));
  EXPECT_EQ(plane.stats().backend_reads, 0u);
  EXPECT_EQ(plane.stats().buffer.bytes_served, 1500u);
  EXPECT_TRUE(plane.stats().balanced());
}

TEST(CachePlane, SpanningReadAdmitsBothRegions) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  plane.backend().put("a", random_bytes(4096, 4));
  plane.read_range("a", 1000, 100);  // regions 0 and 1 of 1 KiB
  EXPECT_EQ(plane.regions().order(), (std::vector<std::pair<std::string, std::uint64_t>>{{"a", 0}, {"a", 1}}));
  EXPECT_TRUE(plane.buffers().contains({"a", 7}));
  EXPECT_TRUE(plane.buffers().contains({"a", 8}));
}

TEST(CachePlane, SharedTierServesAfterComputeEviction) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  plane.backend().put("a", random_bytes(4096, 5));
  plane.read_range("a", 0, 512);
  while (plane.regions().size() > 0 || plane.buffers().size() > 0) plane.evict_tick();
  plane.reset_stats();
  plane.read_range("a", 0, 512);
  EXPECT_EQ(plane.stats().backend_reads, 0u);
  EXPECT_EQ(plane.stats().shared.bytes_served, 512u);
}

TEST(CachePlane, WriteInterleavesAndCommitsAtomically) {
  TestDir dir;
  auto cfg = small_config();
  CachePlane plane(dir.path(), cfg);
  const auto data = random_bytes(40 * 1024, 6);  // four blocks, the last partial
  WriteOptions opt;
  for (std::uint64_t c = 10; c-- > 0;) opt.chunk_order.push_back(c);
  auto rep = plane.write_file("out/f.bin", data, opt);
  EXPECT_TRUE(rep.committed);
  EXPECT_EQ(rep.blocks, 4u);
  EXPECT_EQ(rep.chunks, 10u);
  EXPECT_EQ(rep.events.size(), 8u);
  std::set<std::uint32_t> owners(plane.registry().at("out/f.bin").begin(), plane.registry().at("out/f.bin").end());
  if (owners.size() > 1) EXPECT_TRUE(rep.interleaved());
  EXPECT_EQ(plane.backend().read("out/f.bin", 0, data.size()), data);
  EXPECT_TRUE(plane.backend().temps().empty());
  EXPECT_EQ(plane.read_range("out/f.bin", 12'000, 5000), slice(data, 12'000, 5000));
}

TEST(CachePlane, StagingAppendsContiguousRuns) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto data = random_bytes(12 * 1024, 8);
  WriteOptions opt;
  opt.chunk_order = {1, 2, 0};  // nothing until 0 arrives, then one run of three
  auto rep = plane.write_file("f", data, opt);
  EXPECT_EQ(rep.staged_appends, 1u);
  opt.chunk_order = {0, 2, 1};  // 0 alone waits for a run; 1 then completes the block
  rep = plane.write_file("f", data, opt);
  EXPECT_EQ(rep.staged_appends, 1u);
  opt.chunk_order = {0, 1, 2};
  rep = plane.write_file("f", data, opt);
  EXPECT_EQ(rep.staged_appends, 2u);
  opt.chunk_order = {0, 0, 1};
  expect_code(ErrorCode::InvalidConfig, [&] { plane.write_file("f", data, opt); });
}

TEST(CachePlane, CrashLeavesNoVisibleFile) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto data = random_bytes(30'000, 9);
  WriteOptions opt;
  opt.crash_before_concat = true;
  auto rep = plane.write_file("x/f", data, opt);
  EXPECT_FALSE(rep.committed);
  EXPECT_FALSE(plane.backend().exists("x/f"));
  EXPECT_EQ(plane.backend().temps().size(), 3u);
  EXPECT_EQ(plane.recover(), 3u);
  EXPECT_TRUE(plane.backend().temps().empty());
  EXPECT_FALSE(plane.backend().exists("x/f"));
}

TEST(CachePlane, OverwriteInvalidatesCachedBytes) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto v1 = random_bytes(5000, 10), v2 = random_bytes(6000, 11);
  plane.write_file("f", v1);
  EXPECT_EQ(plane.read_range("f", 0, 5000), v1);
  plane.write_file("f", v2);
  EXPECT_EQ(plane.read_range("f", 0, 6000), v2);
}

TEST(CachePlane, ConcurrentWriterConflicts) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto data = random_bytes(1000, 12);
  WriteOptions opt;
  opt.before_concat = [&] {
    expect_code(ErrorCode::ConcatConflict, [&] { plane.write_file("f", data); });
    EXPECT_TRUE(plane.write_file("g", data).committed);
  };
  EXPECT_TRUE(plane.write_file("f", data, opt).committed);
  EXPECT_TRUE(plane.write_file("f", data).committed);
}

TEST(CachePlane, NodeRemovalKeepsReadsCorrect) {
  TestDir dir;
  CachePlane plane(dir.path(), small_config());
  const auto a = random_bytes(40'000, 13);
  plane.backend().put("a", a);
  plane.read_range("a", 0, a.size());
  plane.remove_node(plane.owner("a", 0));
  while (plane.regions().size() > 0 || plane.buffers().size() > 0) plane.evict_tick();
  EXPECT_EQ(plane.read_range("a", 0, a.size()), a);
}
