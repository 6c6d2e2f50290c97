#include <algorithm>
#include <sstream>

#include <unistd.h>

#include "minihouse/bench/workloads.hpp"

namespace minihouse::bench {

namespace fs = std::filesystem;

std::vector<Check> run_all(const BenchOptions& options, const std::vector<int>& only) {
  using Fn = Check (*)(const BenchOptions&);
  static const Fn kChecks[] = {check_format_roundtrip, check_lookup_io, check_intensity,
                               check_compaction,       check_ivm,       check_refresh_controller,
                               check_fusion,           check_hybrid_plan, check_cache};
  BenchOptions o = options;
  const bool own_scratch = o.scratch.empty();
  if (own_scratch) o.scratch = fs::temp_directory_path() / ("minihouse-bench-" + std::to_string(::getpid()));
  fs::create_directories(o.scratch);
  std::vector<Check> out;
  for (int id = 1; id <= 9; ++id) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    out.push_back(kChecks[id - 1](o));
  }
  if (own_scratch) fs::remove_all(o.scratch);
  return out;
}

nlohmann::ordered_json to_json(const std::vector<Check>& checks, const BenchOptions& o) {
  nlohmann::ordered_json j;
  j["seed"] = o.seed;
  j["scale"] = o.scale;
  bool all = true;
  auto& arr = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    all = all && c.pass;
    arr.push_back({{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}, {"metrics", c.metrics}});
  }
  j["all_pass"] = all;
  return j;
}

std::string format_table(const std::vector<Check>& checks) {
  std::size_t width = 4;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  std::ostringstream os;
  auto pad = [](const std::string& s, std::size_t n) { return s + std::string(n > s.size() ? n - s.size() : 0, ' '); };
  os << pad("id", 4) << pad("check", width + 2) << pad("result", 8) << "detail\n";
  for (const auto& c : checks) {
    os << pad(std::to_string(c.id), 4) << pad(c.name, width + 2) << pad(c.pass ? "PASS" : "FAIL", 8) << c.detail
       << '\n';
  }
  return os.str();
}

}  // namespace minihouse::bench
