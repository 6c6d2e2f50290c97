#include "minihouse/ivm/join.hpp"

#include <cmath>
#include <set>

#include "minihouse/common/error.hpp"

namespace minihouse::ivm {

std::optional<Row> join_key(const Row& payload, const std::vector<std::uint32_t>& cols) {
  Row key;
  key.reserve(cols.size());
  for (auto c : cols) {
    if (c >= payload.size()) fail(ErrorCode::KeyMismatch, "join column " + std::to_string(c) + " out of range");
    const auto& v = payload[c];
    if (is_null(v)) return std::nullopt;
    if (const auto* d = std::get_if<double>(&v)) {
      if (std::isnan(*d)) return std::nullopt;
      key.push_back(*d == 0 ? 0.0 : *d);
    } else {
      key.push_back(v);
    }
  }
  return key;
}

void Arrangement::apply(const DeltaRow& d) {
  auto key = join_key(d.payload, key_cols_);
  if (!key) return;
  auto& bucket = index_[*key];
  auto it = bucket.find(d.tuple_key);
  if (d.kind == DeltaKind::Delete) {
    if (it == bucket.end() || !bit_equal(it->second.payload, d.payload)) {
      fail(ErrorCode::StateInconsistent, "arrangement delete of absent row " + format_delta(d));
    }
    bucket.erase(it);
    --size_;
    if (bucket.empty()) index_.erase(*key);
  } else {
    if (it != bucket.end()) fail(ErrorCode::StateInconsistent, "arrangement insert over live row " + format_delta(d));
    bucket.emplace(d.tuple_key, Tuple{d.payload, d.update_seq});
    ++size_;
  }
}

void Arrangement::apply(const std::vector<DeltaRow>& deltas) {
  for (const auto& d : deltas) {
    if (d.kind == DeltaKind::Delete) apply(d);
  }
  for (const auto& d : deltas) {
    if (d.kind == DeltaKind::Insert) apply(d);
  }
}

const std::map<Row, Tuple, RowLess>* Arrangement::probe(const Row& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &it->second;
}

std::size_t Arrangement::matches(const Row& key) const {
  const auto* b = probe(key);
  return b ? b->size() : 0;
}

namespace {

Row concat(const Row& a, const Row& b) {
  Row out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

int sign_of(DeltaKind k) { return k == DeltaKind::Insert ? 1 : -1; }

DeltaKind kind_of(int sign) { return sign > 0 ? DeltaKind::Insert : DeltaKind::Delete; }

void check_keys(const JoinKeys& keys) {
  if (keys.left.empty() || keys.left.size() != keys.right.size()) {
    fail(ErrorCode::KeyMismatch, "join needs the same non-zero number of key columns on both sides");
  }
}

}  // namespace

std::vector<DeltaRow> inner_join_delta(const std::vector<DeltaRow>& dl, const Arrangement& l_pre,
                                       const std::vector<DeltaRow>& dr, const Arrangement& r_pre, const JoinKeys& keys,
                                       JoinCounters* counters) {
  check_keys(keys);
  JoinCounters local;
  std::vector<DeltaRow> out;
  std::map<Row, std::vector<const DeltaRow*>, RowLess> dr_index;

  for (const auto& r : dr) {
    ++local.delta_rows;
    auto key = join_key(r.payload, keys.right);
    if (!key) continue;
    auto& peers = dr_index[*key];
    const bool first_probe = peers.empty();
    peers.push_back(&r);
    if (const auto* bucket = l_pre.probe(*key)) {
      if (first_probe) local.probe_rows += bucket->size();
      for (const auto& [lk, lt] : *bucket) {
        out.push_back({concat(lk, r.tuple_key), std::max(lt.update_seq, r.update_seq), r.kind,
                       concat(lt.payload, r.payload)});
      }
    }
  }
  std::set<Row, RowLess> probed;  // each distinct key is read from the arrangement once
  for (const auto& l : dl) {
    ++local.delta_rows;
    auto key = join_key(l.payload, keys.left);
    if (!key) continue;
    if (const auto* bucket = r_pre.probe(*key)) {
      if (probed.insert(*key).second) local.probe_rows += bucket->size();
      for (const auto& [rk, rt] : *bucket) {
        out.push_back({concat(l.tuple_key, rk), std::max(l.update_seq, rt.update_seq), l.kind,
                       concat(l.payload, rt.payload)});
      }
    }
    if (auto it = dr_index.find(*key); it != dr_index.end()) {
      for (const auto* r : it->second) {
        out.push_back({concat(l.tuple_key, r->tuple_key), std::max(l.update_seq, r->update_seq),
                       kind_of(sign_of(l.kind) * sign_of(r->kind)), concat(l.payload, r->payload)});
      }
    }
  }
  if (counters) {
    counters->delta_rows += local.delta_rows;
    counters->probe_rows += local.probe_rows;
  }
  return reconcile(std::move(out));
}

std::vector<DeltaRow> outer_join_delta(JoinSide preserved, const std::vector<DeltaRow>& dl, const Arrangement& l_pre,
                                       const std::vector<DeltaRow>& dr, const Arrangement& r_pre, const JoinKeys& keys,
                                       const JoinShape& shape, OuterJoinState& state, JoinCounters* counters) {
  auto out = inner_join_delta(dl, l_pre, dr, r_pre, keys, counters);
  const bool left = preserved == JoinSide::Left;
  const auto& dp = left ? dl : dr;
  const auto& d_other = left ? dr : dl;
  const auto& p_pre = left ? l_pre : r_pre;
  const auto& o_pre = left ? r_pre : l_pre;
  const auto& p_cols = left ? keys.left : keys.right;
  const auto& o_cols = left ? keys.right : keys.left;

  const Row key_pad(left ? shape.right_key_arity : shape.left_key_arity, Value{});
  const Row payload_pad(left ? shape.right_width : shape.left_width, Value{});
  auto null_extended = [&](const Row& tuple_key, const Row& payload, std::uint64_t seq, DeltaKind kind) {
    return left ? DeltaRow{concat(tuple_key, key_pad), seq, kind, concat(payload, payload_pad)}
                : DeltaRow{concat(key_pad, tuple_key), seq, kind, concat(payload_pad, payload)};
  };

  struct Net {
    std::int64_t change = 0;
    std::uint64_t seq = 0;
  };
  std::map<Row, Net, RowLess> net;
  for (const auto& d : d_other) {
    auto key = join_key(d.payload, o_cols);
    if (!key) continue;
    auto& n = net[*key];
    n.change += sign_of(d.kind);
    n.seq = std::max(n.seq, d.update_seq);
  }
  auto post_matches = [&](const std::optional<Row>& key) -> std::int64_t {
    if (!key) return 0;
    std::int64_t m = static_cast<std::int64_t>(o_pre.matches(*key));
    if (auto it = net.find(*key); it != net.end()) m += it->second.change;
    return m;
  };

  std::vector<DeltaRow> corrections;
  std::map<Row, bool, RowLess> handled;  // preserved rows whose status is final for this batch
  std::vector<const DeltaRow*> deletes, inserts;
  for (const auto& d : dp) (d.kind == DeltaKind::Delete ? deletes : inserts).push_back(&d);

  for (const auto* d : deletes) {
    auto it = state.rows.find(d->tuple_key);
    if (it == state.rows.end()) fail(ErrorCode::StateInconsistent, "outer state lacks " + format_row(d->tuple_key));
    if (it->second.matches == 0) corrections.push_back(null_extended(d->tuple_key, d->payload, d->update_seq, DeltaKind::Delete));
    state.rows.erase(it);
    handled[d->tuple_key] = true;
  }
  for (const auto* d : inserts) {
    auto key = join_key(d->payload, p_cols);
    const auto post = post_matches(key);
    if (post < 0) fail(ErrorCode::StateInconsistent, "negative match count for " + format_row(d->tuple_key));
    if (post == 0) corrections.push_back(null_extended(d->tuple_key, d->payload, d->update_seq, DeltaKind::Insert));
    if (!state.rows.emplace(d->tuple_key, OuterEntry{key, post}).second) {
      fail(ErrorCode::StateInconsistent, "outer state insert over live row " + format_row(d->tuple_key));
    }
    handled[d->tuple_key] = true;
  }
  for (const auto& [key, n] : net) {
    if (n.change == 0) continue;
    const auto* bucket = p_pre.probe(key);
    if (!bucket) continue;
    if (counters) counters->probe_rows += bucket->size();
    for (const auto& [tk, tuple] : *bucket) {
      if (handled.count(tk)) continue;
      auto it = state.rows.find(tk);
      if (it == state.rows.end()) fail(ErrorCode::StateInconsistent, "outer state lacks " + format_row(tk));
      const auto before = it->second.matches;
      const auto after = before + n.change;
      if (after < 0) fail(ErrorCode::StateInconsistent, "negative match count for " + format_row(tk));
      if (before == 0 && after > 0) corrections.push_back(null_extended(tk, tuple.payload, n.seq, DeltaKind::Delete));
      if (before > 0 && after == 0) corrections.push_back(null_extended(tk, tuple.payload, n.seq, DeltaKind::Insert));
      it->second.matches = after;
    }
  }
  out.insert(out.end(), corrections.begin(), corrections.end());
  return reconcile(std::move(out));
}

void audit_outer_state(const OuterJoinState& state, const Arrangement& other_side) {
  for (const auto& [tk, e] : state.rows) {
    const auto actual = e.key ? static_cast<std::int64_t>(other_side.matches(*e.key)) : 0;
    if (actual != e.matches) {
      fail(ErrorCode::StateInconsistent, "match count for " + format_row(tk) + " is " + std::to_string(e.matches) +
                                             ", recount gives " + std::to_string(actual));
    }
  }
}

}  // namespace minihouse::ivm
