#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "minihouse/ivm/delta.hpp"

namespace minihouse::ivm {

enum class AggFunc { Count, Sum, Avg, Min, Max };

std::string_view to_string(AggFunc f) noexcept;
std::optional<AggFunc> parse_agg_func(std::string_view name) noexcept;

struct AggregateSpec {
  AggFunc func = AggFunc::Count;
  std::optional<std::uint32_t> column;  // COUNT(*) when absent
};

struct AggPlan {
  std::vector<std::uint32_t> group_by;  // payload column indices
  std::vector<AggregateSpec> aggregates;
  std::vector<ColumnType> input_types;  // payload column types of the input
};

// Order-independent exact sum of doubles: every finite double is an integer multiple of
// 2^-1074, so the running total is kept as that integer. Retractions are exact.
class ExactSum {
 public:
  void add(double v, int sign);
  double value() const;  // correctly rounded to nearest, ties to even
  bool operator==(const ExactSum& o) const = default;

 private:
  boost::multiprecision::cpp_int scaled_;
  std::int64_t nan_ = 0;
  std::int64_t pos_inf_ = 0;
  std::int64_t neg_inf_ = 0;
};

struct AggPartial {
  std::int64_t non_null = 0;
  __int128 int_sum = 0;
  ExactSum float_sum;
};

struct GroupState {
  std::int64_t count = 0;
  std::vector<AggPartial> partials;
  Row derived;  // group key values followed by aggregate results
  std::uint64_t update_seq = 0;
};

// Groups keyed by group-by values. A stored group always has count >= 1.
struct AggState {
  std::map<Row, GroupState, RowLess> groups;
};

// Output payload of a group from its partials.
Row derive_group(const Row& group_key, const GroupState& g, const AggPlan& plan);

// Folds `deltas` into `state` and returns Delete/Insert deltas for changed group rows.
// MIN and MAX raise UnsupportedAggregate.
std::vector<DeltaRow> apply_delta_agg(AggState& state, std::vector<DeltaRow> deltas, const AggPlan& plan);

// Aggregates of one group computed directly from its member payloads (any function).
Row aggregate_rows(const Row& group_key, const std::vector<Row>& members, const AggPlan& plan);

ColumnType aggregate_output_type(const AggregateSpec& a, const std::vector<ColumnType>& input_types);

}  // namespace minihouse::ivm
