#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "test_dir.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = minihouse::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root = (dir.path() / "db").string();
    write(dir.path() / "docs.schema.json",
          R"({"columns":[{"name":"body","type":"string"},{"name":"emb","type":"vector"},{"name":"score","type":"float64"}]})");
    write(dir.path() / "docs.jsonl",
          "{\"document_id\":7,\"chunk_id\":0,\"body\":\"red lake\",\"emb\":[1,0],\"score\":1.5}\n"
          "{\"document_id\":7,\"chunk_id\":1,\"body\":\"stone\"}\n"
          "{\"document_id\":8,\"chunk_id\":0,\"body\":\"blue stone\",\"emb\":[0,1]}\n"
          "{\"document_id\":9,\"chunk_id\":0,\"body\":\"red stone\",\"emb\":[0.6,0.8]}\n");
    write(dir.path() / "labels.schema.json", R"({"columns":[{"name":"tag","type":"string"}]})");
    write(dir.path() / "labels.jsonl",
          "{\"document_id\":7,\"chunk_id\":0,\"tag\":\"doc_image\"}\n"
          "{\"document_id\":8,\"chunk_id\":0,\"tag\":\"doc_text\"}\n"
          "{\"document_id\":9,\"chunk_id\":0,\"tag\":\"doc_image\"}\n");
  }

  void ingest_all() {
    ASSERT_EQ(run({"--root", root, "--no-sync", "ingest", "--table", "docs", "--input", p("docs.jsonl"), "--schema",
                   p("docs.schema.json")})
                  .code,
              0);
    ASSERT_EQ(run({"--root", root, "--no-sync", "ingest", "--table", "labels", "--input", p("labels.jsonl"),
                   "--schema", p("labels.schema.json")})
                  .code,
              0);
  }

  std::string p(const std::string& name) const { return (dir.path() / name).string(); }

  TestDir dir;
  std::string root;
};

}  // namespace

TEST_F(Cli, IngestThenLookupRoundTrip) {
  ingest_all();
  auto r = run({"--root", root, "lookup", "--table", "docs", "--doc", "7", "--chunk", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("body = red lake"), std::string::npos) << r.out;
  r = run({"--root", root, "lookup", "--table", "docs", "--doc", "7", "--chunk", "1", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["row"]["body"], "stone");
  EXPECT_TRUE(j["row"]["emb"].is_null());
  EXPECT_TRUE(j["row"]["score"].is_null());
  EXPECT_EQ(run({"--root", root, "lookup", "--table", "docs", "--doc", "70"}).code, 1);
  EXPECT_EQ(run({"--root", root, "lookup", "--table", "nope", "--doc", "7"}).code, 1);
}

TEST_F(Cli, DeletesAndSnapshotVersions) {
  ingest_all();
  write(dir.path() / "del.jsonl", "{\"document_id\":8,\"chunk_id\":0,\"_delete\":true}\n");
  ASSERT_EQ(run({"--root", root, "--no-sync", "ingest", "--table", "docs", "--input", p("del.jsonl")}).code, 0);
  EXPECT_EQ(run({"--root", root, "lookup", "--table", "docs", "--doc", "8"}).code, 1);
  EXPECT_EQ(run({"--root", root, "lookup", "--table", "docs", "--doc", "8", "--version", "1"}).code, 0);
}

TEST_F(Cli, IngestRejectsBadInput) {
  write(dir.path() / "bad.jsonl", "{\"document_id\":1,\"chunk_id\":0,\"body\":3}\n");
  EXPECT_EQ(run({"--root", root, "ingest", "--table", "docs", "--input", p("bad.jsonl"), "--schema",
                 p("docs.schema.json")})
                .code,
            1);
  write(dir.path() / "bad2.jsonl", "{\"document_id\":1,\"chunk_id\":0,\"nope\":3}\n");
  EXPECT_EQ(run({"--root", root, "ingest", "--table", "docs", "--input", p("bad2.jsonl")}).code, 1);
  EXPECT_EQ(run({"--root", root, "ingest", "--table", "fresh", "--input", p("docs.jsonl")}).code, 1);
}

TEST_F(Cli, HybridQueryWithLabelJoin) {
  ingest_all();
  write(dir.path() / "q.json", "[1, 0.2]");
  auto r = run({"--root", root, "--json", "query", "--table", "docs", "--vector-file", p("q.json"), "--terms", "red",
                "--fusion", "rrf", "--rrf-k", "60", "--topk", "10", "--join", "labels", "--where", "tag=doc_image"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["rows"].size(), 2u);
  // doc 7 is first in both legs, doc 9 second in both: 2/61 and 2/62.
  EXPECT_EQ(j["rows"][0]["document_id"], 7);
  EXPECT_NEAR(j["rows"][0]["_score"].get<double>(), 2.0 / 61, 1e-12);
  EXPECT_EQ(j["rows"][1]["document_id"], 9);
  EXPECT_NEAR(j["rows"][1]["_score"].get<double>(), 2.0 / 62, 1e-12);
  EXPECT_EQ(j["rows"][1]["labels.tag"], "doc_image");
  // Same inputs, same bytes.
  EXPECT_EQ(run({"--root", root, "--json", "query", "--table", "docs", "--vector-file", p("q.json"), "--terms", "red",
                 "--join", "labels", "--where", "tag=doc_image"})
                .out,
            r.out);
  EXPECT_EQ(run({"--root", root, "query", "--table", "docs"}).code, 1);
  EXPECT_EQ(run({"--root", root, "query", "--table", "docs", "--terms", "red", "--fusion", "max"}).code, 1);
}

TEST_F(Cli, QueryWithoutJoinFiltersDocuments) {
  ingest_all();
  auto r = run({"--root", root, "--json", "query", "--table", "docs", "--terms", "stone", "--where", "chunk_id = 0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["rows"].size(), 2u);
  for (const auto& row : j["rows"]) EXPECT_EQ(row["chunk_id"], 0);
  EXPECT_EQ(j["columns"].size(), 5u);
}

TEST_F(Cli, FsckFlagsCorruptionWithExitTwo) {
  ingest_all();
  auto ok = run({"--root", root, "fsck", "--table", "docs"});
  EXPECT_EQ(ok.code, 0) << ok.err;
  fs::path seg;
  for (const auto& e : fs::directory_iterator(fs::path(root) / "docs" / "segments")) seg = e.path();
  auto bytes = [&] {
    std::ifstream in(seg, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  for (std::size_t pos : {std::size_t{40}, bytes.size() / 2, bytes.size() - 10}) {
    auto copy = bytes;
    copy[pos] ^= 0x10;
    const auto bad = dir.path() / ("x" + std::to_string(pos) + ".snf");
    std::ofstream(bad, std::ios::binary) << copy;
    auto r = run({"fsck", "--file", bad.string(), "--json"});
    EXPECT_EQ(r.code, 2) << pos;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_FALSE(j["ok"].get<bool>());
    EXPECT_FALSE(j["files"][0]["regions"].empty());
  }
  EXPECT_EQ(run({"fsck", "--file", p("missing.snf")}).code, 1);
  EXPECT_EQ(run({"fsck"}).code, 1);
}

TEST_F(Cli, ViewRefreshPrintsIntervalTrace) {
  ingest_all();
  write(dir.path() / "v.view",
        "view tagged\nsource d docs\nsource l labels\njoin j inner d l on d.document_id = l.document_id\n"
        "aggregate a j by l.tag compute count(*)\noutput a\n");
  ASSERT_EQ(run({"--root", root, "view", "create", "--file", p("v.view")}).code, 0);
  auto r = run({"--root", root, "view", "refresh", "--name", "tagged", "--interval", "auto", "--util", "0.0",
                "--history", "10", "--source", "last"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("k*T_src = 2 * 10 = 20"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("dt = min(20, 60) = 20"), std::string::npos) << r.out;
  // Average source: mean of 1, 2 and 3 is 2, so 2 * 2 = 4 clamps up to dt_min = 5.
  r = run({"--root", root, "--json", "view", "refresh", "--name", "tagged", "--interval", "auto", "--util", "1",
           "--history", "1,2,3"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["noop"].get<bool>());
  EXPECT_EQ(j["interval"]["t_avg"], 2.0);
  EXPECT_EQ(j["interval"]["interval"], 5.0);
  EXPECT_EQ(j["interval"]["dt_max"], 90.0);

  r = run({"--root", root, "--json", "view", "show", "--name", "tagged"});
  j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["l.tag"], "doc_image");
  EXPECT_EQ(j["rows"][0]["count(*)"], 3);  // doc 7 has two chunks
  EXPECT_EQ(run({"--root", root, "view", "refresh", "--name", "tagged", "--interval", "auto", "--util", "2"}).code, 1);
  EXPECT_EQ(run({"--root", root, "view", "refresh", "--name", "nope"}).code, 1);
}

TEST_F(Cli, CompactMergesDeltas) {
  ingest_all();
  for (int i = 0; i < 4; ++i) {
    ASSERT_EQ(run({"--root", root, "--no-sync", "ingest", "--table", "docs", "--input", p("docs.jsonl")}).code, 0);
  }
  auto r = run({"--root", root, "--json", "compact", "--table", "docs", "--ticks", "2", "--n-star", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GE(j["merges"].get<int>(), 1);
  EXPECT_LT(j["live_delta_segments"].get<int>(), 5);
  EXPECT_EQ(run({"--root", root, "lookup", "--table", "docs", "--doc", "9"}).code, 0);
  EXPECT_EQ(run({"--root", root, "compact", "--table", "docs", "--k", "-1"}).code, 1);
}

TEST_F(Cli, CacheStatsUsesEnvironmentRoot) {
  const auto cache_root = dir.path() / "cache";
  write(cache_root / "f.bin", std::string(300'000, 'x'));
  ::setenv("MINIHOUSE_CACHE_ROOT", cache_root.c_str(), 1);
  auto r = run({"--json", "cache-stats", "--block-mb", "12", "--chunk-mb", "4", "--region-kb", "1024"});
  ::unsetenv("MINIHOUSE_CACHE_ROOT");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["passes"].size(), 2u);
  EXPECT_EQ(j["passes"][0]["backend_reads"], 1);
  EXPECT_EQ(j["passes"][1]["backend_reads"], 0);
  EXPECT_TRUE(j["passes"][1]["balanced"].get<bool>());
  EXPECT_EQ(run({"cache-stats"}).code, 1);
  EXPECT_EQ(run({"cache-stats", "--cache-root", cache_root.string(), "--chunk-mb", "5"}).code, 1);
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
  ingest_all();
  write(dir.path() / "minihouse.toml", "root = \"" + root + "\"\n[lookup]\ntable = \"docs\"\n");
  auto r = run({"--config", p("minihouse.toml"), "lookup", "--doc", "9"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("red stone"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"lookup", "--doc", "x"}).code, 1);
  EXPECT_EQ(run({"bench", "--only", "12"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, InfoListsState) {
  ingest_all();
  auto r = run({"--root", root, "info", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["tables"].size(), 2u);
  EXPECT_EQ(j["tables"][0]["name"], "docs");
  EXPECT_EQ(j["tables"][0]["delta_segments"], 1);
}

TEST_F(Cli, BenchSubsetIsDeterministic) {
  const std::vector<std::string> args{"bench", "--only", "3,6,7", "--scale", "0.05", "--seed", "7", "--json",
                                      "--scratch", p("scratch")};
  auto a = run(args);
  auto b = run(args);
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["checks"].size(), 3u);
}
