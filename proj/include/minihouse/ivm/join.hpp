#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "minihouse/ivm/delta.hpp"

namespace minihouse::ivm {

struct JoinKeys {
  std::vector<std::uint32_t> left;   // payload columns of the left input
  std::vector<std::uint32_t> right;  // payload columns of the right input
};

// Normalized equi-join key; nullopt when the row cannot match (NULL or NaN in a key column).
// Mismatched non-null key types raise KeyMismatch.
std::optional<Row> join_key(const Row& payload, const std::vector<std::uint32_t>& cols);

// One join input indexed by join key. Rows that can never match are not indexed.
class Arrangement {
 public:
  explicit Arrangement(std::vector<std::uint32_t> key_cols = {}) : key_cols_(std::move(key_cols)) {}

  void apply(const DeltaRow& d);
  void apply(const std::vector<DeltaRow>& deltas);

  // Tuples whose join key equals `key`; nullptr when none.
  const std::map<Row, Tuple, RowLess>* probe(const Row& key) const;
  std::size_t matches(const Row& key) const;
  std::size_t size() const noexcept { return size_; }
  const std::vector<std::uint32_t>& key_cols() const noexcept { return key_cols_; }

 private:
  std::vector<std::uint32_t> key_cols_;
  std::map<Row, std::map<Row, Tuple, RowLess>, RowLess> index_;
  std::size_t size_ = 0;
};

struct JoinCounters {
  std::uint64_t delta_rows = 0;  // input delta rows consumed
  std::uint64_t probe_rows = 0;  // stored rows returned by probes
};

// Shape of the two inputs, needed to build null-extended rows.
struct JoinShape {
  std::size_t left_key_arity = 0;
  std::size_t right_key_arity = 0;
  std::size_t left_width = 0;
  std::size_t right_width = 0;
};

// Output tuple_key is left key ++ right key, payload is left payload ++ right payload, and
// update_seq is the larger contributing seq. Computes dL x R_pre + L_pre x dR + dL x dR with
// signed multiplicities, then reconciles.
std::vector<DeltaRow> inner_join_delta(const std::vector<DeltaRow>& dl, const Arrangement& l_pre,
                                       const std::vector<DeltaRow>& dr, const Arrangement& r_pre, const JoinKeys& keys,
                                       JoinCounters* counters = nullptr);

enum class JoinSide { Left, Right };

struct OuterEntry {
  std::optional<Row> key;  // join key, absent when unmatchable
  std::int64_t matches = 0;
};

// Match counts of every preserved-side row, keyed by its tuple_key.
struct OuterJoinState {
  std::map<Row, OuterEntry, RowLess> rows;
};

// Inner delta plus null-extension corrections for the preserved side; updates `state` to the
// post-delta match counts. Arrangements are the pre-delta inputs and are not modified.
std::vector<DeltaRow> outer_join_delta(JoinSide preserved, const std::vector<DeltaRow>& dl, const Arrangement& l_pre,
                                       const std::vector<DeltaRow>& dr, const Arrangement& r_pre, const JoinKeys& keys,
                                       const JoinShape& shape, OuterJoinState& state,
                                       JoinCounters* counters = nullptr);

// Recounts matches from the other side's arrangement; StateInconsistent on any difference.
void audit_outer_state(const OuterJoinState& state, const Arrangement& other_side);

}  // namespace minihouse::ivm
