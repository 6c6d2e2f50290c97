#include "minihouse/ivm/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "minihouse/common/error.hpp"

namespace minihouse::ivm {

using boost::multiprecision::cpp_int;

std::string_view to_string(AggFunc f) noexcept {
  switch (f) {
    case AggFunc::Count: return "count";
    case AggFunc::Sum: return "sum";
    case AggFunc::Avg: return "avg";
    case AggFunc::Min: return "min";
    case AggFunc::Max: return "max";
  }
  return "?";
}

std::optional<AggFunc> parse_agg_func(std::string_view name) noexcept {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto f : {AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max}) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- exact sum

void ExactSum::add(double v, int sign) {
  if (std::isnan(v)) {
    nan_ += sign;
    return;
  }
  if (std::isinf(v)) {
    (v > 0 ? pos_inf_ : neg_inf_) += sign;
    return;
  }
  if (v == 0) return;
  int exp = 0;
  const double fr = std::frexp(std::fabs(v), &exp);
  auto mant = static_cast<std::int64_t>(std::ldexp(fr, 53));
  int shift = exp - 53 + 1074;
  if (shift < 0) {
    mant >>= -shift;
    shift = 0;
  }
  cpp_int term = cpp_int(mant) << shift;
  if ((v < 0) != (sign < 0)) scaled_ -= term;
  else scaled_ += term;
}

double ExactSum::value() const {
  if (nan_ > 0 || (pos_inf_ > 0 && neg_inf_ > 0)) return std::numeric_limits<double>::quiet_NaN();
  if (pos_inf_ > 0) return HUGE_VAL;
  if (neg_inf_ > 0) return -HUGE_VAL;
  if (scaled_ == 0) return 0.0;
  const bool neg = scaled_ < 0;
  cpp_int mag = neg ? cpp_int(-scaled_) : scaled_;
  const auto bits = static_cast<int>(boost::multiprecision::msb(mag)) + 1;
  double out;
  if (bits <= 53) {
    out = std::ldexp(static_cast<double>(mag.convert_to<std::int64_t>()), -1074);
  } else {
    const int drop = bits - 53;
    cpp_int top = mag >> drop;
    const cpp_int rem = mag - (top << drop);
    const cpp_int half = cpp_int(1) << (drop - 1);
    if (rem > half || (rem == half && (top & 1) != 0)) top += 1;
    out = std::ldexp(static_cast<double>(top.convert_to<std::int64_t>()), drop - 1074);
  }
  return neg ? -out : out;
}

// ---------------------------------------------------------------- aggregation

namespace {

void check_plan(const AggPlan& plan) {
  for (auto g : plan.group_by) {
    if (g >= plan.input_types.size()) fail(ErrorCode::UnknownColumn, "group-by column out of range");
  }
  for (const auto& a : plan.aggregates) {
    if (!a.column) {
      if (a.func != AggFunc::Count) fail(ErrorCode::UnsupportedAggregate, std::string(to_string(a.func)) + "(*)");
      continue;
    }
    if (*a.column >= plan.input_types.size()) fail(ErrorCode::UnknownColumn, "aggregate column out of range");
    const auto t = plan.input_types[*a.column];
    if ((a.func == AggFunc::Sum || a.func == AggFunc::Avg) && t != ColumnType::Int64 && t != ColumnType::Float64) {
      fail(ErrorCode::UnsupportedAggregate, std::string(to_string(a.func)) + " over " + std::string(to_string(t)));
    }
    if ((a.func == AggFunc::Min || a.func == AggFunc::Max) && t == ColumnType::Vector) {
      fail(ErrorCode::UnsupportedAggregate, "min/max over vector");
    }
  }
}

Row group_key_of(const Row& payload, const AggPlan& plan) {
  Row k;
  k.reserve(plan.group_by.size());
  for (auto g : plan.group_by) k.push_back(payload[g]);
  return k;
}

void fold(GroupState& g, const Row& payload, int sign, const AggPlan& plan) {
  g.count += sign;
  for (std::size_t i = 0; i < plan.aggregates.size(); ++i) {
    const auto& a = plan.aggregates[i];
    if (!a.column) continue;
    const auto& v = payload[*a.column];
    if (is_null(v)) continue;
    auto& p = g.partials[i];
    p.non_null += sign;
    if (const auto* iv = std::get_if<std::int64_t>(&v)) p.int_sum += static_cast<__int128>(*iv) * sign;
    else if (const auto* dv = std::get_if<double>(&v)) p.float_sum.add(*dv, sign);
  }
}

}  // namespace

ColumnType aggregate_output_type(const AggregateSpec& a, const std::vector<ColumnType>& input_types) {
  switch (a.func) {
    case AggFunc::Count: return ColumnType::Int64;
    case AggFunc::Avg: return ColumnType::Float64;
    case AggFunc::Sum:
    case AggFunc::Min:
    case AggFunc::Max: return input_types.at(*a.column);
  }
  return ColumnType::Int64;
}

Row derive_group(const Row& group_key, const GroupState& g, const AggPlan& plan) {
  Row out = group_key;
  for (std::size_t i = 0; i < plan.aggregates.size(); ++i) {
    const auto& a = plan.aggregates[i];
    const auto& p = g.partials[i];
    const bool is_float = a.column && plan.input_types[*a.column] == ColumnType::Float64;
    switch (a.func) {
      case AggFunc::Count:
        out.push_back(a.column ? p.non_null : g.count);
        break;
      case AggFunc::Sum:
        if (p.non_null == 0) out.push_back(Value{});
        else if (is_float) out.push_back(p.float_sum.value());
        else out.push_back(static_cast<std::int64_t>(p.int_sum));
        break;
      case AggFunc::Avg:
        if (p.non_null == 0) out.push_back(Value{});
        else if (is_float) out.push_back(p.float_sum.value() / static_cast<double>(p.non_null));
        else out.push_back(static_cast<double>(p.int_sum) / static_cast<double>(p.non_null));
        break;
      case AggFunc::Min:
      case AggFunc::Max:
        fail(ErrorCode::UnsupportedAggregate, "min/max are not maintained incrementally");
    }
  }
  return out;
}

std::vector<DeltaRow> apply_delta_agg(AggState& state, std::vector<DeltaRow> deltas, const AggPlan& plan) {
  check_plan(plan);
  for (const auto& a : plan.aggregates) {
    if (a.func == AggFunc::Min || a.func == AggFunc::Max) {
      fail(ErrorCode::UnsupportedAggregate, std::string(to_string(a.func)) + " needs per-group recompute");
    }
  }
  sort_deltas(deltas);
  struct Touched {
    std::optional<Row> old_row;
    std::uint64_t old_seq = 0;
    std::uint64_t seq = 0;
  };
  std::map<Row, Touched, RowLess> touched;
  for (const auto& d : deltas) {
    auto key = group_key_of(d.payload, plan);
    auto it = state.groups.find(key);
    if (it == state.groups.end()) {
      GroupState g;
      g.partials.resize(plan.aggregates.size());
      it = state.groups.emplace(key, std::move(g)).first;
    }
    auto [t, fresh] = touched.try_emplace(key);
    if (fresh && it->second.count > 0) {
      t->second.old_row = it->second.derived;
      t->second.old_seq = it->second.update_seq;
    }
    t->second.seq = std::max(t->second.seq, d.update_seq);
    fold(it->second, d.payload, d.kind == DeltaKind::Insert ? 1 : -1, plan);
  }
  std::vector<DeltaRow> out;
  for (auto& [key, t] : touched) {
    auto it = state.groups.find(key);
    auto& g = it->second;
    if (g.count < 0) fail(ErrorCode::StateInconsistent, "group count below zero for " + format_row(key));
    if (g.count == 0) {
      if (t.old_row) out.push_back({key, t.old_seq, DeltaKind::Delete, *t.old_row});
      state.groups.erase(it);
      continue;
    }
    Row now = derive_group(key, g, plan);
    if (t.old_row && bit_equal(*t.old_row, now)) continue;
    if (t.old_row) out.push_back({key, t.old_seq, DeltaKind::Delete, *t.old_row});
    g.derived = now;
    g.update_seq = std::max(t.seq, t.old_seq);
    out.push_back({key, g.update_seq, DeltaKind::Insert, std::move(now)});
  }
  return out;
}

Row aggregate_rows(const Row& group_key, const std::vector<Row>& members, const AggPlan& plan) {
  check_plan(plan);
  Row out = group_key;
  GroupState g;
  g.partials.resize(plan.aggregates.size());
  for (const auto& m : members) fold(g, m, 1, plan);
  for (std::size_t i = 0; i < plan.aggregates.size(); ++i) {
    const auto& a = plan.aggregates[i];
    if (a.func != AggFunc::Min && a.func != AggFunc::Max) {
      AggPlan one = plan;
      one.aggregates = {a};
      GroupState single;
      single.count = g.count;
      single.partials = {g.partials[i]};
      out.push_back(derive_group({}, single, one)[0]);
      continue;
    }
    std::optional<Value> best;
    for (const auto& m : members) {
      const auto& v = m[*a.column];
      if (is_null(v)) continue;
      const int c = best ? compare_values(v, *best) : 0;
      if (!best || (a.func == AggFunc::Min ? c < 0 : c > 0)) best = v;
    }
    out.push_back(best.value_or(Value{}));
  }
  return out;
}

}  // namespace minihouse::ivm
