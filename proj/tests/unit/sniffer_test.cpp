#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "minihouse/common/checksum.hpp"
#include "minihouse/format/sniffer.hpp"

using namespace minihouse;
using namespace minihouse::snf;

namespace {

Schema keyed_schema() {
  Schema s;
  s.columns = {{"k", ColumnType::Int64, false, {}}, {"name", ColumnType::String, true, {}},
               {"score", ColumnType::Float64, true, {}}};
  s.sort_key = {0};
  s.primary_key = {0};
  return s;
}

std::vector<ColumnData> keyed_columns(const std::vector<std::int64_t>& keys) {
  std::vector<ColumnData> cols(3);
  for (auto k : keys) {
    cols[0].push_back(k);
    cols[1].push_back("n" + std::to_string(k % 7));
    cols[2].push_back(static_cast<double>(k) / 4);
  }
  return cols;
}

std::vector<std::int64_t> iota(std::int64_t from, std::int64_t to) {
  std::vector<std::int64_t> v;
  for (auto i = from; i <= to; ++i) v.push_back(i);
  return v;
}

void expect_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

// Writes an arbitrary mixed-type table with nulls.
struct RandomTable {
  Schema schema;
  std::vector<ColumnData> cols;
};

RandomTable random_table(std::uint64_t seed, std::size_t rows) {
  std::mt19937_64 rng(seed);
  RandomTable t;
  t.schema.columns = {{"id", ColumnType::Int64, false, {}},
                      {"i", ColumnType::Int64, true, {}},
                      {"f", ColumnType::Float64, true, {}},
                      {"s", ColumnType::String, true, {}},
                      {"v", ColumnType::Vector, true, {}}};
  t.schema.sort_key = {0};
  t.cols.resize(5);
  std::int64_t id = -50;
  for (std::size_t r = 0; r < rows; ++r) {
    id += static_cast<std::int64_t>(rng() % 3);
    t.cols[0].push_back(id);
    auto maybe_null = [&](Value v) { return rng() % 5 == 0 ? Value{} : v; };
    t.cols[1].push_back(maybe_null(static_cast<std::int64_t>(rng() % 1000) - 500));
    t.cols[2].push_back(maybe_null(rng() % 2 ? static_cast<double>(rng() % 100) / 8 : std::bit_cast<double>(rng() >> 2)));
    t.cols[3].push_back(maybe_null(std::string(rng() % 6, static_cast<char>('a' + rng() % 3))));
    FloatVector vec(rng() % 4);
    for (auto& x : vec) x = static_cast<float>(rng() % 100) / 10.0f;
    t.cols[4].push_back(maybe_null(vec));
  }
  return t;
}

}  // namespace

TEST(SnifferWrite, EmptyFile) {
  auto res = write_file(keyed_columns({}), keyed_schema());
  auto h = open_file(res.bytes);
  EXPECT_EQ(h->groups().size(), 0u);
  EXPECT_EQ(h->total_rows(), 0u);
  EXPECT_TRUE(h->verify_integrity().all_ok());
  EXPECT_EQ(h->schema(), keyed_schema());
  EXPECT_TRUE(h->locate_key({Value(std::int64_t{1})}, {0}).empty());
}

TEST(SnifferWrite, CeilingPartition) {
  WriteOptions opt;
  opt.group_target_rows = 4;
  auto res = write_file(keyed_columns(iota(1, 10)), keyed_schema(), opt);
  auto h = open_file(res.bytes);
  std::vector<std::uint64_t> sizes;
  for (const auto& g : h->groups()) sizes.push_back(g.row_count());
  // ceil(10 / 4) = 3 groups, last one holds 10 - 2*4 rows
  EXPECT_EQ(sizes, (std::vector<std::uint64_t>{4, 4, 2}));
}

TEST(SnifferWrite, SortViolation) {
  expect_code(ErrorCode::SortViolation, [] { write_file(keyed_columns({1, 3, 2}), keyed_schema()); });
}

TEST(SnifferWrite, SchemaMismatch) {
  auto cols = keyed_columns({1, 2});
  cols.pop_back();
  expect_code(ErrorCode::SchemaMismatch, [&] { write_file(cols, keyed_schema()); });
  auto cols2 = keyed_columns({1, 2});
  cols2[1][0] = std::int64_t{5};
  expect_code(ErrorCode::SchemaMismatch, [&] { write_file(cols2, keyed_schema()); });
  auto cols3 = keyed_columns({1, 2});
  cols3[0][0] = Value{};
  expect_code(ErrorCode::SchemaMismatch, [&] { write_file(cols3, keyed_schema()); });
}

TEST(SnifferOpen, SchemaRoundTrip) {
  auto s = keyed_schema();
  s.columns[1].encoding = enc::CodecId::Dict;
  auto h = open_file(write_file(keyed_columns(iota(1, 30)), s).bytes);
  EXPECT_EQ(h->schema(), s);
  EXPECT_EQ(h->groups()[0].partitions[1].blocks[0].codec, enc::CodecId::Dict);
}

TEST(SnifferOpen, HeadMagic) {
  auto bytes = write_file(keyed_columns(iota(1, 5)), keyed_schema()).bytes;
  for (int i = 0; i < 4; ++i) {
    auto b = bytes;
    b[i] ^= 0x20;
    expect_code(ErrorCode::BadMagic, [&] { open_file(b); });
  }
  expect_code(ErrorCode::BadMagic, [] { open_file(Bytes{'S', 'N', 'F', '1'}); });
}

TEST(SnifferOpen, EveryFooterBitFlip) {
  auto bytes = write_file(keyed_columns(iota(1, 40)), keyed_schema()).bytes;
  const auto footer_at = bytes.size() - kFooterSize;
  for (std::size_t i = footer_at; i < bytes.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto b = bytes;
      b[i] ^= static_cast<std::uint8_t>(1u << bit);
      expect_code(ErrorCode::FooterChecksumMismatch, [&] { open_file(b); });
    }
  }
}

TEST(SnifferOpen, UnsupportedVersion) {
  auto res = write_file(keyed_columns(iota(1, 5)), keyed_schema());
  auto f = res.layout.footer;
  f.version = 2;
  auto b = res.bytes;
  auto footer = encode_footer(f);
  std::copy(footer.begin(), footer.end(), b.end() - kFooterSize);
  expect_code(ErrorCode::UnsupportedVersion, [&] { open_file(b); });
}

TEST(SnifferOpen, IgnoresUnknownTrailingSectionBytes) {
  auto res = write_file(keyed_columns(iota(1, 25)), keyed_schema());
  auto f = res.layout.footer;
  Bytes b(res.bytes.begin(), res.bytes.end() - kFooterSize);
  // The schema section is last before the footer; grow it with fields a newer writer added.
  auto& schema_ref = f.descriptors[4];
  const Bytes extra = {0xAB, 0xCD, 0xEF};
  b.insert(b.end(), extra.begin(), extra.end());
  schema_ref.length += 3;
  const std::uint32_t body_len = schema_ref.length - 8;
  std::memcpy(b.data() + schema_ref.offset + 4, &body_len, 4);
  f.descriptor_crcs[4] = crc32c(ByteSpan(b).subspan(schema_ref.offset, schema_ref.length));
  auto footer = encode_footer(f);
  b.insert(b.end(), footer.begin(), footer.end());
  auto h = open_file(b);
  EXPECT_EQ(h->schema(), keyed_schema());
  EXPECT_TRUE(h->verify_integrity().all_ok());
}

TEST(SnifferLocate, BelowMinimumIsNotFound) {
  WriteOptions opt;
  opt.group_target_rows = 10;
  auto h = open_file(write_file(keyed_columns(iota(1, 100)), keyed_schema(), opt).bytes);
  EXPECT_TRUE(h->locate_key({Value(std::int64_t{0})}, {0}).empty());
  EXPECT_TRUE(h->locate_key({Value(std::int64_t{101})}, {0}).empty());
}

TEST(SnifferLocate, BinarySearchAndOneReadPerColumn) {
  WriteOptions opt;
  opt.group_target_rows = 10;
  auto h = open_file(write_file(keyed_columns(iota(1, 100)), keyed_schema(), opt).bytes);
  h->reset_io();
  auto hits = h->locate_key({Value(std::int64_t{37})}, {0, 2});
  ASSERT_EQ(hits.size(), 1u);
  // oracle: keys 1..100 in groups of 10, so 37 sits in group floor((37-1)/10)
  EXPECT_EQ(hits[0].group_id, (37u - 1) / 10);
  ASSERT_EQ(hits[0].blocks.size(), 2u);
  EXPECT_EQ(h->io().data_block_reads, 0u);
  auto keys = h->read_block(hits[0].blocks[0], ColumnType::Int64);
  auto scores = h->read_block(hits[0].blocks[1], ColumnType::Float64);
  EXPECT_EQ(h->io().data_block_reads, 2u);
  auto pos = std::find_if(keys.begin(), keys.end(), [](const Value& v) { return std::get<std::int64_t>(v) == 37; });
  ASSERT_NE(pos, keys.end());
  EXPECT_EQ(std::get<double>(scores[pos - keys.begin()]), 37.0 / 4);
}

TEST(SnifferLocate, BlockLevelSearch) {
  WriteOptions opt;
  opt.group_target_rows = 50;
  opt.block_target_rows = 8;
  auto h = open_file(write_file(keyed_columns(iota(1, 100)), keyed_schema(), opt).bytes);
  for (std::int64_t key = 1; key <= 100; ++key) {
    auto hits = h->locate_key({Value(key)}, {0});
    ASSERT_EQ(hits.size(), 1u) << key;
    auto vals = h->read_block(hits[0].blocks[0], ColumnType::Int64);
    EXPECT_TRUE(std::any_of(vals.begin(), vals.end(), [&](const Value& v) { return std::get<std::int64_t>(v) == key; }));
  }
}

TEST(SnifferLocate, DuplicatesSpanGroups) {
  std::vector<std::int64_t> keys = {1, 2, 3, 5, 5, 5, 5, 5, 7, 8, 9, 10};
  WriteOptions opt;
  opt.group_target_rows = 4;
  opt.block_target_rows = 2;
  auto h = open_file(write_file(keyed_columns(keys), keyed_schema(), opt).bytes);
  for (std::int64_t key : {5, 7, 1, 10}) {
    // oracle: decode every group and collect (group, block) pairs holding the key
    std::set<std::pair<std::uint32_t, std::uint32_t>> expected;
    for (std::uint32_t g = 0; g < h->groups().size(); ++g) {
      const auto& blocks = h->groups()[g].partitions[0].blocks;
      for (std::uint32_t b = 0; b < blocks.size(); ++b) {
        for (const auto& v : h->read_block(blocks[b], ColumnType::Int64)) {
          if (std::get<std::int64_t>(v) == key) expected.insert({g, b});
        }
      }
    }
    std::set<std::pair<std::uint32_t, std::uint32_t>> got;
    for (const auto& hit : h->locate_key({Value(key)}, {0})) got.insert({hit.group_id, hit.block_index});
    for (const auto& e : expected) EXPECT_TRUE(got.count(e)) << key;
    if (key == 5) {
      std::set<std::uint32_t> groups;
      for (const auto& e : expected) groups.insert(e.first);
      EXPECT_EQ(groups, (std::set<std::uint32_t>{0, 1}));
    }
  }
  EXPECT_TRUE(h->locate_key({Value(std::int64_t{6})}, {0}).size() <= 1);
}

TEST(SnifferLocate, NoSortKey) {
  auto s = keyed_schema();
  s.sort_key.clear();
  auto h = open_file(write_file(keyed_columns({3, 1, 2}), s).bytes);
  expect_code(ErrorCode::NoSortKey, [&] { h->locate_key({Value(std::int64_t{1})}, {0}); });
}

TEST(SnifferPrune, Basic) {
  WriteOptions opt;
  opt.group_target_rows = 10;
  auto h = open_file(write_file(keyed_columns(iota(0, 19)), keyed_schema(), opt).bytes);
  // oracle: recompute min/max per group from decoded data
  for (std::uint32_t g = 0; g < 2; ++g) {
    auto col = h->read_column(g, 0);
    auto [mn, mx] = std::minmax_element(col.begin(), col.end(), ValueLess{});
    EXPECT_EQ(std::get<std::int64_t>(*mn), g * 10);
    EXPECT_EQ(std::get<std::int64_t>(*mx), g * 10 + 9);
  }
  EXPECT_EQ(h->prune(Comparison{"k", CmpOp::Eq, std::int64_t{15}}), (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(h->prune(Predicate{}), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(h->prune(Comparison{"k", CmpOp::Ge, std::int64_t{-100}}), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(h->prune(Comparison{"k", CmpOp::Lt, std::int64_t{10}}), (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(h->prune(Comparison{"k", CmpOp::Eq, 15.5}), (std::vector<std::uint32_t>{}));
  EXPECT_EQ(h->prune(Comparison{"k", CmpOp::Eq, 15.0}), (std::vector<std::uint32_t>{1}));
  expect_code(ErrorCode::UnknownColumn, [&] { h->prune(Comparison{"nope", CmpOp::Eq, std::int64_t{1}}); });
}

TEST(SnifferPrune, BloomMembershipReplay) {
  std::mt19937_64 rng(5);
  std::vector<std::int64_t> keys;
  for (int i = 0; i < 2000; ++i) keys.push_back(static_cast<std::int64_t>(rng() % 100000));
  std::sort(keys.begin(), keys.end());
  WriteOptions opt;
  opt.group_target_rows = 100;
  auto h = open_file(write_file(keyed_columns(keys), keyed_schema(), opt).bytes);
  std::size_t bloom_rejects = 0;
  for (std::uint32_t g = 0; g < h->groups().size(); ++g) {
    for (const auto& v : h->read_column(g, 0)) {
      auto surv = h->prune(Comparison{"k", CmpOp::Eq, v});
      EXPECT_TRUE(std::count(surv.begin(), surv.end(), g)) << "false negative";
    }
  }
  // absent keys inside a group's range are mostly rejected by the bloom filter
  for (std::int64_t probe = 1; probe < 100000; probe += 37) {
    if (std::binary_search(keys.begin(), keys.end(), probe)) continue;
    const auto& gs = h->groups();
    for (std::uint32_t g = 0; g < gs.size(); ++g) {
      if (compare_values(gs[g].partitions[0].stats.min, Value(probe)) < 0 &&
          compare_values(gs[g].partitions[0].stats.max, Value(probe)) > 0) {
        auto surv = h->prune(Comparison{"k", CmpOp::Eq, probe});
        if (!std::count(surv.begin(), surv.end(), g)) ++bloom_rejects;
      }
    }
  }
  EXPECT_GT(bloom_rejects, 2000u);
}

class PruneSoundness : public ::testing::TestWithParam<int> {};

TEST_P(PruneSoundness, SurvivingGroupsMatchFullScan) {
  auto t = random_table(static_cast<std::uint64_t>(GetParam()), 400);
  WriteOptions opt;
  opt.group_target_rows = 37;
  auto h = open_file(write_file(t.cols, t.schema, opt).bytes);
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) + 1000);
  const std::vector<CmpOp> ops = {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge};
  for (int q = 0; q < 40; ++q) {
    const auto col = static_cast<std::uint32_t>(rng() % 4);
    Value lit = t.cols[col][rng() % t.cols[col].size()];
    if (rng() % 3 == 0 && col == 1) lit = static_cast<double>(static_cast<std::int64_t>(rng() % 1000) - 500) + 0.5;
    Comparison cmp{t.schema.columns[col].name, ops[rng() % ops.size()], lit};
    std::vector<Row> full, pruned;
    const auto all = h->read_all(h->all_columns());
    for (const auto& r : all) {
      if (eval_cmp(r[col], cmp.op, cmp.literal)) full.push_back(r);
    }
    for (auto g : h->prune(cmp)) {
      for (const auto& r : h->read_group(g, h->all_columns())) {
        if (eval_cmp(r[col], cmp.op, cmp.literal)) pruned.push_back(r);
      }
    }
    ASSERT_EQ(full.size(), pruned.size()) << format_predicate({cmp});
    for (std::size_t i = 0; i < full.size(); ++i) ASSERT_TRUE(bit_equal(full[i], pruned[i]));
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PruneSoundness, ::testing::Range(0, 8));

class SnifferRoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(SnifferRoundTrip, AllTypesWithNulls) {
  auto t = random_table(static_cast<std::uint64_t>(GetParam()) * 7919, 1 + GetParam() * 53);
  WriteOptions opt;
  opt.group_target_rows = 64;
  opt.block_target_rows = GetParam() % 2 ? 16 : 0;
  auto h = open_file(write_file(t.cols, t.schema, opt).bytes);
  auto rows = h->read_all(h->all_columns());
  ASSERT_EQ(rows.size(), t.cols[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < t.cols.size(); ++c) ASSERT_TRUE(bit_equal(rows[r][c], t.cols[c][r])) << r << "," << c;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SnifferRoundTrip, ::testing::Range(0, 12));

TEST(SnifferRead, OutOfRangeAndCodecMismatch) {
  auto h = open_file(write_file(keyed_columns(iota(1, 20)), keyed_schema()).bytes);
  auto ref = h->groups()[0].partitions[0].blocks[0];
  auto bad = ref;
  bad.file_offset = h->file_size();
  expect_code(ErrorCode::OutOfRange, [&] { h->read_block(bad, ColumnType::Int64); });
  bad = ref;
  bad.byte_length = static_cast<std::uint32_t>(h->file_size());
  expect_code(ErrorCode::OutOfRange, [&] { h->read_block(bad, ColumnType::Int64); });
  auto other = ref;
  other.codec = ref.codec == enc::CodecId::Plain ? enc::CodecId::Rle : enc::CodecId::Plain;
  expect_code(ErrorCode::CodecMismatch, [&] { h->read_block(other, ColumnType::Int64); });
  auto sref = h->groups()[0].partitions[1].blocks[0];
  if (sref.codec != enc::CodecId::Plain && sref.codec != enc::CodecId::Rle) {
    expect_code(ErrorCode::CodecMismatch, [&] { h->read_block(sref, ColumnType::Int64); });
  }
}

TEST(SnifferRead, ProjectionReadsOneBlockPerGroup) {
  WriteOptions opt;
  opt.group_target_rows = 10;
  auto h = open_file(write_file(keyed_columns(iota(1, 45)), keyed_schema(), opt).bytes);
  h->reset_io();
  auto rows = h->read_all({1});
  EXPECT_EQ(rows.size(), 45u);
  // oracle: one block per group for a single projected column, ceil(45/10) groups
  EXPECT_EQ(h->io().data_block_reads, 5u);
}

TEST(SnifferIntegrity, DescriptorFlipFlagsOnlyThatDescriptor) {
  auto res = write_file(keyed_columns(iota(1, 60)), keyed_schema(), {.group_target_rows = 16});
  const auto& f = res.layout.footer;
  for (std::size_t d = 0; d < kDescriptorCount; ++d) {
    for (std::uint32_t off = 0; off < f.descriptors[d].length; off += 7) {
      auto b = res.bytes;
      b[f.descriptors[d].offset + off] ^= 0x5A;
      auto h = open_file(b);
      auto rep = h->verify_integrity();
      for (const auto& st : rep.regions) {
        EXPECT_EQ(st.ok, st.region != static_cast<Region>(d + 1)) << to_string(st.region) << " off " << off;
      }
    }
  }
  auto b = res.bytes;
  b[f.descriptors[4].offset + 10] ^= 1;
  auto h = open_file(b);
  expect_code(ErrorCode::DescriptorCorrupt, [&] { h->schema(); });
}

TEST(SnifferIntegrity, DataFlipFlagsDataOnly) {
  auto res = write_file(keyed_columns(iota(1, 60)), keyed_schema(), {.group_target_rows = 16});
  for (std::size_t off = 4; off < 4 + res.layout.footer.data_length; off += 5) {
    auto b = res.bytes;
    b[off] ^= 0x10;
    auto h = open_file(b);
    auto rep = h->verify_integrity();
    EXPECT_FALSE(rep.is_ok(Region::Data));
    for (const auto& st : rep.regions) {
      if (st.region != Region::Data) EXPECT_TRUE(st.ok);
    }
  }
  auto b = res.bytes;
  const auto ref = res.layout.record_groups[0].partitions[0].blocks[0];
  b[ref.file_offset + 3] ^= 0x01;
  auto h = open_file(b);
  expect_code(ErrorCode::BlockChecksumMismatch, [&] { h->read_block(ref, ColumnType::Int64); });
}

TEST(SnifferIntegrity, EverySingleBitFlipIsDetected) {
  auto t = random_table(99, 30);
  auto res = write_file(t.cols, t.schema, {.group_target_rows = 8});
  for (std::size_t i = 0; i < res.bytes.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto b = res.bytes;
      b[i] ^= static_cast<std::uint8_t>(1u << bit);
      bool detected = false;
      try {
        detected = !open_file(b)->verify_integrity().all_ok();
      } catch (const Error& e) {
        detected = is_corruption(e.code());
      }
      ASSERT_TRUE(detected) << "byte " << i << " bit " << bit;
    }
  }
}

TEST(SnifferIntegrity, SelfContainedOnDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "mh_snf_selfcontained";
  std::filesystem::create_directories(dir);
  const auto path = dir / "t.snf";
  auto res = write_file(keyed_columns(iota(1, 33)), keyed_schema(), {.group_target_rows = 8});
  write_bytes_atomic(path, ByteSpan(res.bytes));
  auto h = FileHandle::open_path(path);
  EXPECT_EQ(h->read_all({0}).size(), 33u);
  EXPECT_EQ(h->locate_key({Value(std::int64_t{20})}, {1}).size(), 1u);
  std::filesystem::remove_all(dir);
}
