#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "minihouse/ivm/view.hpp"

namespace minihouse::ivm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, int line_no) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty list item");
    out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

std::string_view join_type_name(JoinType t) {
  switch (t) {
    case JoinType::Inner: return "inner";
    case JoinType::Left: return "left";
    case JoinType::Right: return "right";
  }
  return "?";
}

}  // namespace

ViewDefinition ViewDefinition::parse(const std::string& text) {
  static const std::regex view_re(R"(^view\s+([A-Za-z_]\w*)$)");
  static const std::regex source_re(R"(^source\s+([A-Za-z_]\w*)\s+([A-Za-z_][\w-]*)$)");
  static const std::regex filter_re(R"(^filter\s+([A-Za-z_]\w*)\s+(\w+)\s+where\s+(.+)$)");
  static const std::regex project_re(R"(^project\s+([A-Za-z_]\w*)\s+(\w+)\s+(.+)$)");
  static const std::regex join_re(R"(^join\s+([A-Za-z_]\w*)\s+(inner|left|right)\s+(\w+)\s+(\w+)\s+on\s+(.+)$)");
  static const std::regex join_term_re(R"(^\s*([\w.]+)\s*=\s*([\w.]+)\s*$)");
  static const std::regex and_re(R"(\s+and\s+)");
  static const std::regex agg_re(R"(^aggregate\s+([A-Za-z_]\w*)\s+(\w+)(?:\s+by\s+(.+?))?\s+compute\s+(.+)$)");
  static const std::regex agg_term_re(R"(^(\w+)\(\s*(\*|[\w.]+)\s*\)$)");
  static const std::regex output_re(R"(^output\s+(\w+)$)");

  ViewDefinition def;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto err = [&](const std::string& msg) { fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + msg); };
  auto need_input = [&](const std::string& id) {
    if (!ids.count(id)) err("unknown input node '" + id + "'");
  };
  auto add = [&](PlanNode n) {
    if (!ids.insert(n.id).second) err("duplicate node id '" + n.id + "'");
    def.nodes.push_back(std::move(n));
  };

  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    std::smatch m;
    if (std::regex_match(line, m, view_re)) {
      if (!def.name.empty()) err("second view line");
      def.name = m[1];
    } else if (std::regex_match(line, m, source_re)) {
      PlanNode n;
      n.kind = PlanNode::Kind::Source;
      n.id = m[1];
      n.table = m[2];
      add(std::move(n));
    } else if (std::regex_match(line, m, filter_re)) {
      PlanNode n;
      n.kind = PlanNode::Kind::Filter;
      n.id = m[1];
      need_input(m[2]);
      n.inputs = {m[2]};
      n.predicate = parse_predicate(m[3].str());
      add(std::move(n));
    } else if (std::regex_match(line, m, join_re)) {
      PlanNode n;
      n.kind = PlanNode::Kind::Join;
      n.id = m[1];
      n.join_type = m[2] == "inner" ? JoinType::Inner : m[2] == "left" ? JoinType::Left : JoinType::Right;
      need_input(m[3]);
      need_input(m[4]);
      n.inputs = {m[3], m[4]};
      const std::string on = m[5];
      std::sregex_token_iterator it(on.begin(), on.end(), and_re, -1), end;
      for (; it != end; ++it) {
        std::smatch t;
        const std::string term = *it;
        if (!std::regex_match(term, t, join_term_re)) err("bad join condition '" + term + "'");
        n.left_keys.push_back(t[1]);
        n.right_keys.push_back(t[2]);
      }
      add(std::move(n));
    } else if (std::regex_match(line, m, agg_re)) {
      PlanNode n;
      n.kind = PlanNode::Kind::Aggregate;
      n.id = m[1];
      need_input(m[2]);
      n.inputs = {m[2]};
      if (m[3].matched) n.group_by = split_list(m[3], line_no);
      for (const auto& term : split_list(m[4], line_no)) {
        std::smatch t;
        if (!std::regex_match(term, t, agg_term_re)) err("bad aggregate '" + term + "'");
        auto fn = parse_agg_func(t[1].str());
        if (!fn) fail(ErrorCode::UnsupportedAggregate, "unknown aggregate '" + t[1].str() + "'");
        AggExpr a{*fn, {}};
        if (t[2] != "*") a.column = t[2];
        n.aggregates.push_back(std::move(a));
      }
      add(std::move(n));
    } else if (std::regex_match(line, m, project_re)) {
      PlanNode n;
      n.kind = PlanNode::Kind::Project;
      n.id = m[1];
      need_input(m[2]);
      n.inputs = {m[2]};
      n.columns = split_list(m[3], line_no);
      add(std::move(n));
    } else if (std::regex_match(line, m, output_re)) {
      if (!def.output.empty()) err("second output line");
      need_input(m[1]);
      def.output = m[1];
    } else {
      err("unrecognized line '" + line + "'");
    }
  }
  if (def.name.empty()) fail(ErrorCode::ParseError, "missing 'view <name>' line");
  if (def.output.empty()) fail(ErrorCode::ParseError, "missing 'output <id>' line");

  // The plan must be a tree rooted at the output node.
  std::map<std::string, int> uses;
  for (const auto& n : def.nodes) {
    for (const auto& i : n.inputs) ++uses[i];
  }
  for (const auto& n : def.nodes) {
    const int u = uses[n.id];
    if (n.id == def.output ? u != 0 : u != 1) {
      fail(ErrorCode::ParseError, "node '" + n.id + "' must feed exactly one parent (plan is not a tree)");
    }
  }
  return def;
}

std::string ViewDefinition::format() const {
  std::ostringstream out;
  out << "view " << name << "\n";
  for (const auto& n : nodes) {
    switch (n.kind) {
      case PlanNode::Kind::Source:
        out << "source " << n.id << " " << n.table << "\n";
        break;
      case PlanNode::Kind::Filter:
        out << "filter " << n.id << " " << n.inputs[0] << " where " << format_predicate(n.predicate) << "\n";
        break;
      case PlanNode::Kind::Project:
        out << "project " << n.id << " " << n.inputs[0] << " " << join_list(n.columns) << "\n";
        break;
      case PlanNode::Kind::Join: {
        out << "join " << n.id << " " << join_type_name(n.join_type) << " " << n.inputs[0] << " " << n.inputs[1] << " on ";
        for (std::size_t i = 0; i < n.left_keys.size(); ++i) {
          out << (i ? " and " : "") << n.left_keys[i] << " = " << n.right_keys[i];
        }
        out << "\n";
        break;
      }
      case PlanNode::Kind::Aggregate: {
        out << "aggregate " << n.id << " " << n.inputs[0];
        if (!n.group_by.empty()) out << " by " << join_list(n.group_by);
        out << " compute ";
        for (std::size_t i = 0; i < n.aggregates.size(); ++i) {
          out << (i ? ", " : "") << to_string(n.aggregates[i].func) << "(" << n.aggregates[i].column.value_or("*") << ")";
        }
        out << "\n";
        break;
      }
    }
  }
  out << "output " << output << "\n";
  return out.str();
}

std::vector<std::string> ViewDefinition::tables() const {
  std::set<std::string> t;
  for (const auto& n : nodes) {
    if (n.kind == PlanNode::Kind::Source) t.insert(n.table);
  }
  return {t.begin(), t.end()};
}

}  // namespace minihouse::ivm
