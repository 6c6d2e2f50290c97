#include "minihouse/bench/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include <boost/multiprecision/cpp_int.hpp>

#include "minihouse/common/error.hpp"

namespace minihouse::bench {

using boost::multiprecision::cpp_rational;
using ivm::AggFunc;
using ivm::JoinType;
using ivm::PlanNode;

double nearest_sum(const std::vector<double>& values) {
  bool nan = false, pinf = false, ninf = false;
  cpp_rational q = 0;
  for (double v : values) {
    if (std::isnan(v)) nan = true;
    else if (std::isinf(v)) (v > 0 ? pinf : ninf) = true;
    else q += cpp_rational(v);
  }
  if (nan || (pinf && ninf)) return std::numeric_limits<double>::quiet_NaN();
  if (pinf) return HUGE_VAL;
  if (ninf) return -HUGE_VAL;
  if (q == 0) return 0.0;
  double d = q.convert_to<double>();
  if (std::isinf(d)) return d;
  auto dist = [&](double x) -> cpp_rational { return abs(cpp_rational(x) - q); };
  // Walk to the nearest representable neighbour.
  for (;;) {
    const double up = std::nextafter(d, HUGE_VAL), down = std::nextafter(d, -HUGE_VAL);
    if (std::isfinite(up) && dist(up) < dist(d)) d = up;
    else if (std::isfinite(down) && dist(down) < dist(d)) d = down;
    else break;
  }
  for (double n : {std::nextafter(d, HUGE_VAL), std::nextafter(d, -HUGE_VAL)}) {
    if (std::isfinite(n) && dist(n) == dist(d)) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      if (bits & 1) d = n;
    }
  }
  return d;
}

bool keys_equal(const Value& a, const Value& b) {
  if (is_null(a) || is_null(b)) return false;
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<double>(&a)) return *x == std::get<double>(b);
  if (const auto* x = std::get_if<std::int64_t>(&a)) return *x == std::get<std::int64_t>(b);
  if (const auto* x = std::get_if<std::string>(&a)) return *x == std::get<std::string>(b);
  return false;
}

namespace {

struct Rel {
  std::vector<std::string> cols;
  std::vector<Row> rows;
};

std::size_t col(const Rel& r, const std::string& name) {
  for (std::size_t i = 0; i < r.cols.size(); ++i) {
    if (r.cols[i] == name) return i;
  }
  fail(ErrorCode::UnknownColumn, "oracle: no column " + name);
}

bool matches(const Value& v, CmpOp op, const Value& lit) {
  // Numeric comparisons done directly so the oracle does not lean on sql_compare.
  if (is_null(v) || is_null(lit)) return false;
  int c;
  if (std::holds_alternative<std::string>(v) && std::holds_alternative<std::string>(lit)) {
    const auto& a = std::get<std::string>(v);
    const auto& b = std::get<std::string>(lit);
    c = a < b ? -1 : a > b ? 1 : 0;
  } else if (std::holds_alternative<std::int64_t>(v) && std::holds_alternative<std::int64_t>(lit)) {
    const auto a = std::get<std::int64_t>(v), b = std::get<std::int64_t>(lit);
    c = a < b ? -1 : a > b ? 1 : 0;
  } else if ((std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v)) &&
             (std::holds_alternative<std::int64_t>(lit) || std::holds_alternative<double>(lit))) {
    auto as_q = [](const Value& x) -> std::optional<cpp_rational> {
      if (const auto* i = std::get_if<std::int64_t>(&x)) return cpp_rational(*i);
      const double d = std::get<double>(x);
      if (std::isnan(d) || std::isinf(d)) return std::nullopt;
      return cpp_rational(d);
    };
    auto a = as_q(v), b = as_q(lit);
    if (!a || !b) {
      const double x = std::holds_alternative<double>(v) ? std::get<double>(v) : static_cast<double>(std::get<std::int64_t>(v));
      const double y = std::holds_alternative<double>(lit) ? std::get<double>(lit) : static_cast<double>(std::get<std::int64_t>(lit));
      if (std::isnan(x) || std::isnan(y)) return false;
      c = x < y ? -1 : x > y ? 1 : 0;
    } else {
      c = *a < *b ? -1 : *a > *b ? 1 : 0;
    }
  } else {
    return false;
  }
  switch (op) {
    case CmpOp::Eq: return c == 0;
    case CmpOp::Ne: return c != 0;
    case CmpOp::Lt: return c < 0;
    case CmpOp::Le: return c <= 0;
    case CmpOp::Gt: return c > 0;
    case CmpOp::Ge: return c >= 0;
  }
  return false;
}

Value aggregate(const ivm::AggExpr& a, const std::vector<const Row*>& members, std::optional<std::size_t> c,
                bool float_input) {
  if (a.func == AggFunc::Count) {
    if (!c) return static_cast<std::int64_t>(members.size());
    std::int64_t n = 0;
    for (const auto* m : members) n += is_null((*m)[*c]) ? 0 : 1;
    return n;
  }
  std::vector<const Value*> vals;
  for (const auto* m : members) {
    if (!is_null((*m)[*c])) vals.push_back(&(*m)[*c]);
  }
  if (vals.empty()) return Value{};
  switch (a.func) {
    case AggFunc::Sum:
    case AggFunc::Avg: {
      if (float_input) {
        std::vector<double> xs;
        for (const auto* v : vals) xs.push_back(std::get<double>(*v));
        const double s = nearest_sum(xs);
        return a.func == AggFunc::Sum ? Value(s) : Value(s / static_cast<double>(xs.size()));
      }
      std::int64_t s = 0;
      for (const auto* v : vals) s += std::get<std::int64_t>(*v);
      return a.func == AggFunc::Sum ? Value(s) : Value(static_cast<double>(s) / static_cast<double>(vals.size()));
    }
    case AggFunc::Min:
    case AggFunc::Max: {
      const Value* best = vals[0];
      for (const auto* v : vals) {
        const int cmp = compare_values(*v, *best);
        if (a.func == AggFunc::Min ? cmp < 0 : cmp > 0) best = v;
      }
      return *best;
    }
    case AggFunc::Count: break;
  }
  return Value{};
}

}  // namespace

std::vector<Row> evaluate_view(const ivm::ViewDefinition& def, const std::map<std::string, std::vector<Row>>& tables,
                               const std::map<std::string, std::vector<std::string>>& table_columns) {
  std::map<std::string, Rel> rel;
  for (const auto& n : def.nodes) {
    Rel out;
    switch (n.kind) {
      case PlanNode::Kind::Source: {
        for (const auto& c : table_columns.at(n.table)) out.cols.push_back(n.id + "." + c);
        out.rows = tables.at(n.table);
        break;
      }
      case PlanNode::Kind::Filter: {
        const auto& in = rel.at(n.inputs[0]);
        out.cols = in.cols;
        for (const auto& r : in.rows) {
          bool keep = true;
          for (const auto& c : n.predicate) keep = keep && matches(r[col(in, c.column)], c.op, c.literal);
          if (keep) out.rows.push_back(r);
        }
        break;
      }
      case PlanNode::Kind::Project: {
        const auto& in = rel.at(n.inputs[0]);
        out.cols = n.columns;
        for (const auto& r : in.rows) {
          Row p;
          for (const auto& c : n.columns) p.push_back(r[col(in, c)]);
          out.rows.push_back(std::move(p));
        }
        break;
      }
      case PlanNode::Kind::Join: {
        const auto& l = rel.at(n.inputs[0]);
        const auto& r = rel.at(n.inputs[1]);
        out.cols = l.cols;
        out.cols.insert(out.cols.end(), r.cols.begin(), r.cols.end());
        std::vector<std::size_t> lk, rk;
        for (const auto& k : n.left_keys) lk.push_back(col(l, k));
        for (const auto& k : n.right_keys) rk.push_back(col(r, k));
        std::vector<bool> r_matched(r.rows.size(), false);
        for (const auto& lr : l.rows) {
          bool any = false;
          for (std::size_t j = 0; j < r.rows.size(); ++j) {
            bool eq = true;
            for (std::size_t k = 0; k < lk.size() && eq; ++k) eq = keys_equal(lr[lk[k]], r.rows[j][rk[k]]);
            if (!eq) continue;
            any = true;
            r_matched[j] = true;
            Row o = lr;
            o.insert(o.end(), r.rows[j].begin(), r.rows[j].end());
            out.rows.push_back(std::move(o));
          }
          if (!any && n.join_type == JoinType::Left) {
            Row o = lr;
            o.resize(out.cols.size());
            out.rows.push_back(std::move(o));
          }
        }
        if (n.join_type == JoinType::Right) {
          for (std::size_t j = 0; j < r.rows.size(); ++j) {
            if (r_matched[j]) continue;
            Row o(l.cols.size());
            o.insert(o.end(), r.rows[j].begin(), r.rows[j].end());
            out.rows.push_back(std::move(o));
          }
        }
        break;
      }
      case PlanNode::Kind::Aggregate: {
        const auto& in = rel.at(n.inputs[0]);
        std::vector<std::size_t> g;
        for (const auto& c : n.group_by) {
          g.push_back(col(in, c));
          out.cols.push_back(c);
        }
        std::vector<std::pair<Row, std::vector<const Row*>>> groups;
        for (const auto& r : in.rows) {
          Row key;
          for (auto i : g) key.push_back(r[i]);
          auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& p) { return bit_equal(p.first, key); });
          if (it == groups.end()) groups.push_back({key, {&r}});
          else it->second.push_back(&r);
        }
        for (const auto& [key, members] : groups) {
          Row o = key;
          for (const auto& a : n.aggregates) {
            std::optional<std::size_t> c;
            bool is_float = false;
            if (a.column) {
              c = col(in, *a.column);
              for (const auto* m : members) {
                if (std::holds_alternative<double>((*m)[*c])) is_float = true;
              }
            }
            o.push_back(aggregate(a, members, c, is_float));
          }
          out.rows.push_back(std::move(o));
        }
        break;
      }
    }
    rel[n.id] = std::move(out);
  }
  return rel.at(def.output).rows;
}

}  // namespace minihouse::bench

namespace minihouse::bench {

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out(1);
  for (char ch : s) {
    const bool alnum = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
    if (alnum) out.back().push_back(ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch - 'A' + 'a') : ch);
    else if (!out.back().empty()) out.emplace_back();
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

// rows sorted by (score desc, id asc); returns id -> rank
std::map<std::uint64_t, std::size_t> ranks_of(std::vector<std::pair<double, std::uint64_t>> scored) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::map<std::uint64_t, std::size_t> r;
  for (std::size_t i = 0; i < scored.size(); ++i) r[scored[i].second] = i + 1;
  return r;
}

}  // namespace

std::vector<Row> hybrid_reference(const hybrid::Relation& docs, const hybrid::Relation& labels,
                                  const hybrid::HybridQuery& q) {
  const auto dk = docs.column(q.doc_key), lk = labels.column(q.label_key);
  // join + filter
  std::vector<std::vector<std::size_t>> partners(docs.rows.size());
  std::vector<bool> survives(docs.rows.size(), false);
  for (std::size_t d = 0; d < docs.rows.size(); ++d) {
    for (std::size_t l = 0; l < labels.rows.size(); ++l) {
      if (!keys_equal(docs.rows[d][dk], labels.rows[l][lk])) continue;
      bool ok = true;
      for (const auto& c : q.label_predicate) ok = ok && matches(labels.rows[l][labels.column(c.column)], c.op, c.literal);
      if (!ok) continue;
      partners[d].push_back(l);
      survives[d] = true;
    }
  }
  // per-modality scores over surviving documents
  std::vector<std::vector<std::pair<double, std::uint64_t>>> lists;
  if (q.vector) {
    const auto vc = docs.column(q.vector_column);
    double qn = 0;
    for (float x : *q.vector) qn += static_cast<double>(x) * x;
    auto& l = lists.emplace_back();
    for (std::size_t d = 0; d < docs.rows.size(); ++d) {
      if (!survives[d] || !std::holds_alternative<FloatVector>(docs.rows[d][vc])) continue;
      const auto& v = std::get<FloatVector>(docs.rows[d][vc]);
      double dot = 0, vn = 0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        dot += static_cast<double>((*q.vector)[j]) * v[j];
        vn += static_cast<double>(v[j]) * v[j];
      }
      if (vn != 0) l.push_back({dot / std::sqrt(qn * vn), d});
    }
  }
  if (!q.terms.empty()) {
    const auto tc = docs.column(q.text_column);
    std::vector<std::string> want;
    for (const auto& t : q.terms) {
      for (auto& w : words(t)) {
        if (std::find(want.begin(), want.end(), w) == want.end()) want.push_back(w);
      }
    }
    auto& l = lists.emplace_back();
    for (std::size_t d = 0; d < docs.rows.size(); ++d) {
      if (!survives[d] || !std::holds_alternative<std::string>(docs.rows[d][tc])) continue;
      std::size_t n = 0;
      for (const auto& w : words(std::get<std::string>(docs.rows[d][tc]))) n += std::count(want.begin(), want.end(), w);
      if (n) l.push_back({static_cast<double>(n), d});
    }
  }
  // fusion
  std::map<std::uint64_t, double> fused;
  if (q.fusion.mode == hybrid::FusionMode::Rrf) {
    std::vector<std::map<std::uint64_t, std::size_t>> rk;
    for (const auto& l : lists) rk.push_back(ranks_of(l));
    std::set<std::uint64_t> ids;
    for (const auto& r : rk) for (const auto& [id, _] : r) ids.insert(id);
    for (auto id : ids) {
      double s = 0;
      for (const auto& r : rk) {
        if (auto it = r.find(id); it != r.end()) s += 1.0 / (q.fusion.rrf_k + static_cast<double>(it->second));
      }
      fused[id] = s;
    }
  } else {
    std::vector<double> w = q.fusion.weights;
    if (w.empty()) w.assign(lists.size(), 1.0);
    double total = 0;
    for (double x : w) total += x;
    std::set<std::uint64_t> ids;
    for (const auto& l : lists) for (const auto& e : l) ids.insert(e.second);
    for (auto id : ids) {
      double s = 0;
      for (std::size_t i = 0; i < lists.size(); ++i) {
        const auto& l = lists[i];
        auto it = std::find_if(l.begin(), l.end(), [&](const auto& e) { return e.second == id; });
        if (it == l.end()) continue;
        double lo = l[0].first, hi = l[0].first;
        for (const auto& e : l) lo = std::min(lo, e.first), hi = std::max(hi, e.first);
        s += (w[i] / total) * (hi == lo ? 1.0 : (it->first - lo) / (hi - lo));
      }
      fused[id] = s;
    }
  }
  std::vector<std::pair<double, std::uint64_t>> order;
  for (const auto& [id, s] : fused) order.push_back({s, id});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (order.size() > q.fusion.top_k) order.resize(q.fusion.top_k);
  std::vector<Row> out;
  for (const auto& [_, id] : order) {
    for (auto l : partners[id]) {
      Row r = docs.rows[id];
      r.insert(r.end(), labels.rows[l].begin(), labels.rows[l].end());
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace minihouse::bench
