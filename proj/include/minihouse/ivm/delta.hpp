#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "minihouse/common/value.hpp"

namespace minihouse::ivm {

enum class DeltaKind : std::uint8_t { Delete = 0, Insert = 1 };

// A lineage-tagged change. An update is a Delete of the old image followed by an Insert of
// the new one under the same tuple_key with a larger update_seq.
struct DeltaRow {
  Row tuple_key;
  std::uint64_t update_seq = 0;
  DeltaKind kind = DeltaKind::Insert;
  Row payload;
};

std::string format_delta(const DeltaRow& d);

// Orders by (tuple_key, update_seq), deletes before inserts on ties.
void sort_deltas(std::vector<DeltaRow>& deltas);

// Sums signed multiplicities of identical (tuple_key, payload) pairs; pairs that cancel are
// dropped and survivors carry the largest contributing update_seq.
std::vector<DeltaRow> reconcile(std::vector<DeltaRow> deltas);

struct Tuple {
  Row payload;
  std::uint64_t update_seq = 0;
};

// A keyed relation: at most one payload per tuple_key.
class Collection {
 public:
  // Deletes must name the stored payload exactly and inserts must not collide; otherwise
  // StateInconsistent.
  void apply(const DeltaRow& d);
  void apply(const std::vector<DeltaRow>& deltas);

  const std::map<Row, Tuple, RowLess>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::vector<Row> payloads() const;
  // Every stored tuple as an Insert, in key order.
  std::vector<DeltaRow> as_inserts() const;

 private:
  std::map<Row, Tuple, RowLess> rows_;
};

// Sorted payload multiset, for order-insensitive comparison.
std::vector<Row> sorted_rows(std::vector<Row> rows);
bool same_multiset(const std::vector<Row>& a, const std::vector<Row>& b);

}  // namespace minihouse::ivm
