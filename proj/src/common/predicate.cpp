#include "minihouse/common/predicate.hpp"

#include <charconv>
#include <cmath>
#include <regex>

namespace minihouse {

std::string_view to_string(CmpOp op) noexcept {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

std::optional<CmpOp> parse_cmp_op(std::string_view text) noexcept {
  if (text == "=" || text == "==") return CmpOp::Eq;
  if (text == "!=" || text == "<>") return CmpOp::Ne;
  if (text == "<") return CmpOp::Lt;
  if (text == "<=") return CmpOp::Le;
  if (text == ">") return CmpOp::Gt;
  if (text == ">=") return CmpOp::Ge;
  return std::nullopt;
}

namespace {

int sign(auto x) { return x < 0 ? -1 : (x > 0 ? 1 : 0); }

// Exact int64-vs-double ordering; NaN sorts above every integer.
int compare_int_double(std::int64_t i, double d) noexcept {
  if (std::isnan(d)) return -1;
  if (d >= 9223372036854775808.0) return -1;
  if (d < -9223372036854775808.0) return 1;
  const double t = std::trunc(d);
  const auto ti = static_cast<std::int64_t>(t);
  if (i != ti) return i < ti ? -1 : 1;
  return t == d ? 0 : (d > t ? -1 : 1);
}

}  // namespace

std::optional<int> sql_compare(const Value& a, const Value& b) noexcept {
  if (is_null(a) || is_null(b)) return std::nullopt;
  if (a.index() == 1 && b.index() == 2) return compare_int_double(std::get<1>(a), std::get<2>(b));
  if (a.index() == 2 && b.index() == 1) return -compare_int_double(std::get<1>(b), std::get<2>(a));
  if (a.index() != b.index()) return std::nullopt;
  if (a.index() == 2) {
    // -0.0 and +0.0 are equal under SQL comparison.
    const double x = std::get<2>(a), y = std::get<2>(b);
    if (x == y) return 0;
  }
  return sign(compare_values(a, b));
}

bool eval_cmp(const Value& cell, CmpOp op, const Value& literal) noexcept {
  auto c = sql_compare(cell, literal);
  if (!c) return false;
  switch (op) {
    case CmpOp::Eq: return *c == 0;
    case CmpOp::Ne: return *c != 0;
    case CmpOp::Lt: return *c < 0;
    case CmpOp::Le: return *c <= 0;
    case CmpOp::Gt: return *c > 0;
    case CmpOp::Ge: return *c >= 0;
  }
  return false;
}

std::string format_predicate(const Predicate& pred) {
  std::string out;
  for (const auto& c : pred) {
    if (!out.empty()) out += " and ";
    out += c.column;
    out += ' ';
    out += to_string(c.op);
    out += ' ';
    out += c.literal.index() == 3 ? "'" + std::get<3>(c.literal) + "'" : format_value(c.literal);
  }
  return out;
}

Value parse_literal(std::string_view text) {
  if (text.size() >= 2 && (text.front() == '\'' || text.front() == '"') && text.back() == text.front()) {
    return std::string(text.substr(1, text.size() - 2));
  }
  if (text == "null" || text == "NULL") return std::monostate{};
  std::int64_t i = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
  if (ec == std::errc() && p == text.data() + text.size()) return i;
  double d = 0;
  auto [p2, ec2] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ec2 == std::errc() && p2 == text.data() + text.size()) return d;
  return std::string(text);
}

Predicate parse_predicate(std::string_view text) {
  static const std::regex term(R"(^\s*([A-Za-z_][\w.]*)\s*(<=|>=|!=|<>|==|=|<|>)\s*('[^']*'|"[^"]*"|[^\s]+)\s*$)");
  static const std::regex conj(R"(\s+and\s+)", std::regex::icase);
  Predicate out;
  const std::string s(text);
  if (s.find_first_not_of(" \t") == std::string::npos) return out;
  std::sregex_token_iterator it(s.begin(), s.end(), conj, -1), end;
  for (; it != end; ++it) {
    const std::string part = *it;
    std::smatch m;
    if (!std::regex_match(part, m, term)) fail(ErrorCode::ParseError, "bad predicate term: '" + part + "'");
    out.push_back({m[1].str(), *parse_cmp_op(m[2].str()), parse_literal(m[3].str())});
  }
  return out;
}

}  // namespace minihouse
