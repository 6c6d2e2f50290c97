#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minihouse/common/value.hpp"

namespace minihouse {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CmpOp op) noexcept;
std::optional<CmpOp> parse_cmp_op(std::string_view text) noexcept;

// SQL-style comparison: nullopt when either side is NULL or the types are incomparable.
// Int64 and Float64 compare exactly by numeric value.
std::optional<int> sql_compare(const Value& a, const Value& b) noexcept;
bool eval_cmp(const Value& cell, CmpOp op, const Value& literal) noexcept;

struct Comparison {
  std::string column;
  CmpOp op = CmpOp::Eq;
  Value literal;
};

// Conjunction; empty means "true".
using Predicate = std::vector<Comparison>;

std::string format_predicate(const Predicate& pred);

// "col op literal [and col op literal ...]"; literals are ints, decimals or quoted strings.
Predicate parse_predicate(std::string_view text);
Value parse_literal(std::string_view text);

}  // namespace minihouse
