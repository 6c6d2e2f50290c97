#include "minihouse/ivm/delta.hpp"

#include <algorithm>

#include "minihouse/common/error.hpp"

namespace minihouse::ivm {

std::string format_delta(const DeltaRow& d) {
  return std::string(d.kind == DeltaKind::Insert ? "+" : "-") + format_row(d.tuple_key) + "@" +
         std::to_string(d.update_seq) + " " + format_row(d.payload);
}

void sort_deltas(std::vector<DeltaRow>& deltas) {
  std::stable_sort(deltas.begin(), deltas.end(), [](const DeltaRow& a, const DeltaRow& b) {
    if (int c = compare_rows(a.tuple_key, b.tuple_key)) return c < 0;
    if (a.update_seq != b.update_seq) return a.update_seq < b.update_seq;
    return a.kind < b.kind;
  });
}

std::vector<DeltaRow> reconcile(std::vector<DeltaRow> deltas) {
  struct Acc {
    long long net = 0;
    std::uint64_t seq = 0;
    DeltaRow* first = nullptr;
  };
  struct PairLess {
    bool operator()(const std::pair<Row, Row>& a, const std::pair<Row, Row>& b) const {
      if (int c = compare_rows(a.first, b.first)) return c < 0;
      return compare_rows(a.second, b.second) < 0;
    }
  };
  std::map<std::pair<Row, Row>, Acc, PairLess> acc;
  for (auto& d : deltas) {
    auto& a = acc[{d.tuple_key, d.payload}];
    a.net += d.kind == DeltaKind::Insert ? 1 : -1;
    a.seq = std::max(a.seq, d.update_seq);
    if (!a.first) a.first = &d;
  }
  std::vector<DeltaRow> out;
  for (auto& [kp, a] : acc) {
    const auto kind = a.net > 0 ? DeltaKind::Insert : DeltaKind::Delete;
    for (long long i = 0; i < (a.net > 0 ? a.net : -a.net); ++i) {
      out.push_back({a.first->tuple_key, a.seq, kind, a.first->payload});
    }
  }
  sort_deltas(out);
  return out;
}

void Collection::apply(const DeltaRow& d) {
  auto it = rows_.find(d.tuple_key);
  if (d.kind == DeltaKind::Delete) {
    if (it == rows_.end() || !bit_equal(it->second.payload, d.payload)) {
      fail(ErrorCode::StateInconsistent, "delete of a row not present: " + format_delta(d));
    }
    rows_.erase(it);
  } else {
    if (it != rows_.end()) fail(ErrorCode::StateInconsistent, "insert over a live row: " + format_delta(d));
    rows_.emplace(d.tuple_key, Tuple{d.payload, d.update_seq});
  }
}

void Collection::apply(const std::vector<DeltaRow>& deltas) {
  // Deletes first so an update pair never collides with itself.
  for (const auto& d : deltas) {
    if (d.kind == DeltaKind::Delete) apply(d);
  }
  for (const auto& d : deltas) {
    if (d.kind == DeltaKind::Insert) apply(d);
  }
}

std::vector<Row> Collection::payloads() const {
  std::vector<Row> out;
  out.reserve(rows_.size());
  for (const auto& [k, t] : rows_) out.push_back(t.payload);
  return out;
}

std::vector<DeltaRow> Collection::as_inserts() const {
  std::vector<DeltaRow> out;
  out.reserve(rows_.size());
  for (const auto& [k, t] : rows_) out.push_back({k, t.update_seq, DeltaKind::Insert, t.payload});
  return out;
}

std::vector<Row> sorted_rows(std::vector<Row> rows) {
  std::sort(rows.begin(), rows.end(), RowLess{});
  return rows;
}

bool same_multiset(const std::vector<Row>& a, const std::vector<Row>& b) {
  if (a.size() != b.size()) return false;
  auto x = sorted_rows(a);
  auto y = sorted_rows(b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!bit_equal(x[i], y[i])) return false;
  }
  return true;
}

}  // namespace minihouse::ivm
