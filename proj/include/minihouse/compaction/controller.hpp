#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "minihouse/engine/table.hpp"

namespace minihouse::compaction {

struct ControllerConfig {
  std::uint32_t n_star = 10;    // equilibrium delta count
  double k = 0.5;               // sensitivity
  std::uint32_t max_batch = 8;  // segments per merge at full intensity
  double base_period = 4.0;     // ticks between merges at alpha = 0+
  std::optional<double> min_period;  // ticks at alpha = 1; base_period / 8 when unset

  void validate() const;
  double effective_min_period() const { return min_period.value_or(base_period / 8.0); }
};

// alpha = clamp(k * (n_delta / n_star - 1), 0, 1).
double intensity(std::uint64_t n_delta, std::uint64_t n_star, double k);

std::uint32_t batch_size(double alpha, const ControllerConfig& cfg);
double trigger_period(double alpha, const ControllerConfig& cfg);

struct MergePlan {
  std::vector<std::uint64_t> inputs;  // oldest first
  std::uint32_t batch = 0;
  double priority = 0;  // alpha; carried for reporting only
};

// `live_deltas` must be ordered oldest first. Empty when alpha is 0 or fewer than two deltas exist.
std::optional<MergePlan> plan_compaction(const std::vector<engine::SegmentInfo>& live_deltas, double alpha,
                                         const ControllerConfig& cfg);

struct MergeStats {
  std::uint64_t input_rows = 0;
  std::uint64_t output_rows = 0;
  std::uint64_t dropped_tombstones = 0;
};

// Merges the plan's inputs into one stable segment committed at a fresh version.
engine::SegmentInfo execute_merge(const MergePlan& plan, engine::Table& table, MergeStats* stats = nullptr);

struct TickReport {
  std::uint64_t tick = 0;
  std::uint64_t n_delta = 0;
  double alpha = 0;
  std::uint32_t batch = 0;  // 0 when no merge ran
  std::optional<engine::SegmentInfo> merged;
};

// Evaluates the controller once per tick and runs at most one merge.
class Controller {
 public:
  Controller(engine::Table& table, ControllerConfig cfg, std::ostream* log = nullptr);

  TickReport tick();
  const ControllerConfig& config() const noexcept { return cfg_; }

 private:
  engine::Table& table_;
  ControllerConfig cfg_;
  std::ostream* log_;
  std::uint64_t tick_ = 0;
  double since_merge_ = 0;
};

}  // namespace minihouse::compaction
