#include "minihouse/ivm/refresh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "minihouse/common/error.hpp"

namespace minihouse::ivm {

void RefreshConfig::validate() const {
  if (!(dt_min > 0)) fail(ErrorCode::InvalidConfig, "dt_min must be > 0");
  if (!(dt_base >= dt_min)) fail(ErrorCode::InvalidConfig, "dt_base must be >= dt_min");
  if (window < 1) fail(ErrorCode::InvalidConfig, "window must be >= 1");
  if (!(k > 0) || !std::isfinite(k)) fail(ErrorCode::InvalidConfig, "k must be > 0");
  if (!(alpha >= 0) || !std::isfinite(alpha)) fail(ErrorCode::InvalidConfig, "alpha must be >= 0");
}

double average_cost(const std::vector<double>& history, std::size_t window) {
  if (history.empty()) fail(ErrorCode::EmptyHistory, "no refresh durations recorded");
  const auto n = std::min(window, history.size());
  double sum = 0;
  for (auto it = history.end() - static_cast<std::ptrdiff_t>(n); it != history.end(); ++it) sum += *it;
  return sum / static_cast<double>(n);
}

double max_interval(double utilization, const RefreshConfig& cfg) {
  return cfg.dt_base * (1.0 + cfg.alpha * utilization);
}

IntervalTrace refresh_interval_trace(const std::vector<double>& history, double t_last, double utilization,
                                     const RefreshConfig& cfg) {
  cfg.validate();
  if (!(utilization >= 0 && utilization <= 1)) fail(ErrorCode::InvalidConfig, "utilization must be in [0, 1]");
  IntervalTrace t;
  t.t_avg = average_cost(history, cfg.window);
  t.t_last = t_last;
  t.t_src = cfg.source == CostSource::Last ? t_last : t.t_avg;
  t.scaled = cfg.k * t.t_src;
  t.lower = std::max(t.scaled, cfg.dt_min);
  t.dt_max = max_interval(utilization, cfg);
  t.interval = std::min(t.lower, t.dt_max);
  return t;
}

double next_refresh_interval(const std::vector<double>& history, double t_last, double utilization,
                             const RefreshConfig& cfg) {
  return refresh_interval_trace(history, t_last, utilization, cfg).interval;
}

std::string format_trace(const IntervalTrace& t, const RefreshConfig& cfg, double utilization) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "T_avg = %.6g (window %zu)\nT_last = %.6g\nT_src = %.6g (%s)\nk*T_src = %.6g * %.6g = %.6g\n"
                "lower = max(%.6g, dt_min=%.6g) = %.6g\ndt_max = %.6g * (1 + %.6g * %.6g) = %.6g\n"
                "dt = min(%.6g, %.6g) = %.6g\n",
                t.t_avg, cfg.window, t.t_last, t.t_src, cfg.source == CostSource::Last ? "last" : "avg", cfg.k,
                t.t_src, t.scaled, t.scaled, cfg.dt_min, t.lower, cfg.dt_base, cfg.alpha, utilization, t.dt_max,
                t.lower, t.dt_max, t.interval);
  return buf;
}

}  // namespace minihouse::ivm
