#include "minihouse/compaction/controller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace minihouse::compaction {

void ControllerConfig::validate() const {
  if (n_star < 1) fail(ErrorCode::InvalidConfig, "n_star must be >= 1");
  if (!(k > 0) || !std::isfinite(k)) fail(ErrorCode::InvalidConfig, "k must be > 0");
  if (max_batch < 2) fail(ErrorCode::InvalidConfig, "max_batch must be >= 2");
  if (!(base_period > 0)) fail(ErrorCode::InvalidConfig, "base_period must be > 0");
  const auto lo = effective_min_period();
  if (!(lo > 0) || lo > base_period) fail(ErrorCode::InvalidConfig, "min_period must be in (0, base_period]");
}

double intensity(std::uint64_t n_delta, std::uint64_t n_star, double k) {
  if (n_star == 0) fail(ErrorCode::InvalidConfig, "n_star must be >= 1");
  if (n_delta <= n_star) return 0.0;
  // Extended precision keeps the single final rounding within one ulp of the exact value.
  const long double a = static_cast<long double>(k) * (static_cast<long double>(n_delta) - static_cast<long double>(n_star)) /
                        static_cast<long double>(n_star);
  if (!(a > 0)) return 0.0;
  if (a >= 1) return 1.0;
  return static_cast<double>(a);
}

std::uint32_t batch_size(double alpha, const ControllerConfig& cfg) {
  return static_cast<std::uint32_t>(std::lround(2.0 + alpha * (cfg.max_batch - 2.0)));
}

double trigger_period(double alpha, const ControllerConfig& cfg) {
  return cfg.base_period * (1.0 - alpha) + cfg.effective_min_period() * alpha;
}

std::optional<MergePlan> plan_compaction(const std::vector<engine::SegmentInfo>& live_deltas, double alpha,
                                         const ControllerConfig& cfg) {
  if (!(alpha > 0) || live_deltas.size() < 2) return std::nullopt;
  MergePlan plan;
  plan.batch = std::min<std::uint32_t>(batch_size(alpha, cfg), static_cast<std::uint32_t>(live_deltas.size()));
  plan.priority = alpha;
  for (std::uint32_t i = 0; i < plan.batch; ++i) plan.inputs.push_back(live_deltas[i].id);
  return plan;
}

engine::SegmentInfo execute_merge(const MergePlan& plan, engine::Table& table, MergeStats* stats) {
  if (plan.inputs.empty()) fail(ErrorCode::InvalidConfig, "merge plan has no inputs");
  const auto live = table.live_segments();
  std::uint64_t max_input_version = 0;
  for (auto id : plan.inputs) {
    auto it = std::find_if(live.begin(), live.end(), [&](const auto& s) { return s.id == id; });
    if (it == live.end()) fail(ErrorCode::SegmentRetired, "segment " + std::to_string(id) + " is not live");
    max_input_version = std::max(max_input_version, it->max_version);
  }
  std::vector<std::uint64_t> older;
  for (const auto& s : live) {
    if (s.rows > 0 && std::find(plan.inputs.begin(), plan.inputs.end(), s.id) == plan.inputs.end() &&
        s.min_version < max_input_version) {
      older.push_back(s.id);
    }
  }

  std::map<engine::RowKey, engine::Entry> newest;
  MergeStats local;
  for (auto id : plan.inputs) {
    for (auto& e : table.read_segment(id)) {
      ++local.input_rows;
      auto it = newest.find(e.key);
      if (it == newest.end()) newest.emplace(e.key, std::move(e));
      else if (e.seq > it->second.seq) it->second = std::move(e);
    }
  }
  std::vector<engine::Entry> out;
  out.reserve(newest.size());
  for (auto& [key, e] : newest) {
    // A tombstone only matters while an older segment may still hold the key.
    if (e.tomb && !table.key_in_segments(key, older)) {
      ++local.dropped_tombstones;
      continue;
    }
    out.push_back(std::move(e));
  }
  local.output_rows = out.size();
  auto seg = table.install_merge(plan.inputs, std::move(out));
  if (stats) *stats = local;
  return seg;
}

Controller::Controller(engine::Table& table, ControllerConfig cfg, std::ostream* log)
    : table_(table), cfg_(cfg), log_(log) {
  cfg_.validate();
}

TickReport Controller::tick() {
  TickReport r;
  r.tick = ++tick_;
  since_merge_ += 1;
  const auto deltas = table_.live_segments(engine::SegmentKind::Delta);
  r.n_delta = deltas.size();
  r.alpha = intensity(r.n_delta, cfg_.n_star, cfg_.k);
  if (r.alpha > 0 && since_merge_ >= trigger_period(r.alpha, cfg_)) {
    if (auto plan = plan_compaction(deltas, r.alpha, cfg_)) {
      r.merged = execute_merge(*plan, table_);
      r.batch = plan->batch;
      since_merge_ = 0;
    }
  }
  if (log_) {
    char line[128];
    std::snprintf(line, sizeof line, "tick=%llu n_delta=%llu alpha=%.6f batch=%u\n",
                  static_cast<unsigned long long>(r.tick), static_cast<unsigned long long>(r.n_delta), r.alpha,
                  r.batch);
    *log_ << line;
  }
  return r;
}

}  // namespace minihouse::compaction
