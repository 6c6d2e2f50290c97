#pragma once

#include <string>
#include <vector>

namespace minihouse::ivm {

enum class CostSource { Last, Average };

struct RefreshConfig {
  double k = 2.0;           // scaling factor on maintenance cost
  double dt_min = 5.0;      // seconds
  double dt_base = 60.0;    // seconds, idle upper bound
  double alpha = 0.5;       // load sensitivity
  std::size_t window = 8;   // history length N
  CostSource source = CostSource::Average;

  void validate() const;
};

struct IntervalTrace {
  double t_avg = 0;
  double t_last = 0;
  double t_src = 0;
  double scaled = 0;    // k * t_src
  double lower = 0;     // max(scaled, dt_min)
  double dt_max = 0;    // dt_base * (1 + alpha * U)
  double interval = 0;  // min(lower, dt_max)
};

// Mean of the last `window` refresh durations.
double average_cost(const std::vector<double>& history, std::size_t window);
double max_interval(double utilization, const RefreshConfig& cfg);

// Next refresh interval in seconds. EmptyHistory when history is empty; utilization must lie in [0, 1].
IntervalTrace refresh_interval_trace(const std::vector<double>& history, double t_last, double utilization,
                                     const RefreshConfig& cfg);
double next_refresh_interval(const std::vector<double>& history, double t_last, double utilization,
                             const RefreshConfig& cfg);

std::string format_trace(const IntervalTrace& t, const RefreshConfig& cfg, double utilization);

}  // namespace minihouse::ivm
