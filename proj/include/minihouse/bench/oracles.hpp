#pragma once

#include <map>
#include <string>
#include <vector>

#include "minihouse/common/value.hpp"
#include "minihouse/hybrid/hybrid.hpp"
#include "minihouse/ivm/view.hpp"

// Brute-force reference implementations. They share no code with the operators they check.
namespace minihouse::bench {

// Nearest double to the exact sum of `values` (ties to even); NaN/inf follow IEEE rules.
double nearest_sum(const std::vector<double>& values);

// SQL equality for join keys: NULL and NaN never match, -0.0 equals 0.0.
bool keys_equal(const Value& a, const Value& b);

// Evaluates a view plan over fully materialized base tables (table -> visible rows) with
// nested-loop joins and linear grouping.
std::vector<Row> evaluate_view(const ivm::ViewDefinition& def, const std::map<std::string, std::vector<Row>>& tables,
                               const std::map<std::string, std::vector<std::string>>& table_columns);

// Hybrid query by brute force: nested-loop join and filter first, then per-modality scores,
// ranks and fusion computed directly from their definitions, then the top K documents.
std::vector<Row> hybrid_reference(const hybrid::Relation& docs, const hybrid::Relation& labels,
                                  const hybrid::HybridQuery& q);

}  // namespace minihouse::bench
