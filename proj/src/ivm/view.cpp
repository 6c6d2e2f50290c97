#include "minihouse/ivm/view.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <json.hpp>

namespace minihouse::ivm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxDurations = 64;

struct MinMaxGroup {
  Collection members;
  Row derived;
  std::uint64_t update_seq = 0;
};

struct Node {
  PlanNode::Kind kind;
  std::vector<std::size_t> children;
  std::vector<std::string> cols;
  std::vector<ColumnType> types;
  std::size_t key_arity = 0;

  std::string table;
  std::vector<std::pair<std::uint32_t, Comparison>> preds;
  std::vector<std::uint32_t> proj;

  JoinType join_type = JoinType::Inner;
  JoinKeys keys;
  JoinShape shape;
  Arrangement left, right;
  OuterJoinState outer;

  AggPlan agg;
  bool minmax = false;
  AggState agg_state;
  std::map<Row, MinMaxGroup, RowLess> mm_groups;
};

std::uint32_t find_col(const Node& n, const std::string& name) {
  auto it = std::find(n.cols.begin(), n.cols.end(), name);
  if (it == n.cols.end()) fail(ErrorCode::UnknownColumn, "no column '" + name + "' in plan input");
  return static_cast<std::uint32_t>(it - n.cols.begin());
}

}  // namespace

struct View::State {
  std::vector<Node> nodes;
  std::size_t root = 0;
  Collection output;

  static std::unique_ptr<State> compile(engine::Database& db, const ViewDefinition& def);
  std::vector<DeltaRow> push(std::size_t n, const std::map<std::string, std::vector<DeltaRow>>& base,
                             RefreshResult& r);
  void audit() const;
};

std::unique_ptr<View::State> View::State::compile(engine::Database& db, const ViewDefinition& def) {
  auto st = std::make_unique<State>();
  std::map<std::string, std::size_t> index;
  for (const auto& p : def.nodes) {
    Node n;
    n.kind = p.kind;
    for (const auto& i : p.inputs) n.children.push_back(index.at(i));
    switch (p.kind) {
      case PlanNode::Kind::Source: {
        const auto& schema = db.table(p.table).def().schema;
        n.table = p.table;
        for (const auto& c : schema.columns) {
          n.cols.push_back(p.id + "." + c.name);
          n.types.push_back(c.type);
        }
        n.key_arity = 2;
        break;
      }
      case PlanNode::Kind::Filter: {
        const auto& child = st->nodes[n.children[0]];
        n.cols = child.cols;
        n.types = child.types;
        n.key_arity = child.key_arity;
        for (const auto& c : p.predicate) n.preds.emplace_back(find_col(child, c.column), c);
        break;
      }
      case PlanNode::Kind::Project: {
        const auto& child = st->nodes[n.children[0]];
        for (const auto& c : p.columns) {
          const auto i = find_col(child, c);
          n.proj.push_back(i);
          n.cols.push_back(c);
          n.types.push_back(child.types[i]);
        }
        n.key_arity = child.key_arity;
        break;
      }
      case PlanNode::Kind::Join: {
        const auto& l = st->nodes[n.children[0]];
        const auto& r = st->nodes[n.children[1]];
        n.join_type = p.join_type;
        for (std::size_t i = 0; i < p.left_keys.size(); ++i) {
          const auto li = find_col(l, p.left_keys[i]);
          const auto ri = find_col(r, p.right_keys[i]);
          if (l.types[li] != r.types[ri] || l.types[li] == ColumnType::Vector) {
            fail(ErrorCode::KeyMismatch, "join key types differ: " + p.left_keys[i] + " vs " + p.right_keys[i]);
          }
          n.keys.left.push_back(li);
          n.keys.right.push_back(ri);
        }
        if (n.keys.left.empty()) fail(ErrorCode::KeyMismatch, "join without key columns");
        n.cols = l.cols;
        n.cols.insert(n.cols.end(), r.cols.begin(), r.cols.end());
        for (std::size_t i = 0; i < n.cols.size(); ++i) {
          if (std::count(n.cols.begin(), n.cols.end(), n.cols[i]) > 1) {
            fail(ErrorCode::KeyMismatch, "duplicate column '" + n.cols[i] + "' in join output");
          }
        }
        n.types = l.types;
        n.types.insert(n.types.end(), r.types.begin(), r.types.end());
        n.key_arity = l.key_arity + r.key_arity;
        n.shape = {l.key_arity, r.key_arity, l.cols.size(), r.cols.size()};
        n.left = Arrangement(n.keys.left);
        n.right = Arrangement(n.keys.right);
        break;
      }
      case PlanNode::Kind::Aggregate: {
        if (p.id != def.output) fail(ErrorCode::UnsupportedAggregate, "aggregate must be the output node");
        const auto& child = st->nodes[n.children[0]];
        n.agg.input_types = child.types;
        for (const auto& g : p.group_by) {
          const auto i = find_col(child, g);
          n.agg.group_by.push_back(i);
          n.cols.push_back(g);
          n.types.push_back(child.types[i]);
        }
        for (const auto& a : p.aggregates) {
          AggregateSpec s{a.func, {}};
          if (a.column) s.column = find_col(child, *a.column);
          n.agg.aggregates.push_back(s);
          if (a.func == AggFunc::Min || a.func == AggFunc::Max) n.minmax = true;
          n.cols.push_back(std::string(to_string(a.func)) + "(" + a.column.value_or("*") + ")");
        }
        // Validates column types for the functions.
        aggregate_rows({}, {}, n.agg);
        for (const auto& s : n.agg.aggregates) n.types.push_back(aggregate_output_type(s, child.types));
        n.key_arity = p.group_by.size();
        break;
      }
    }
    index[p.id] = st->nodes.size();
    st->nodes.push_back(std::move(n));
  }
  st->root = index.at(def.output);
  return st;
}

std::vector<DeltaRow> View::State::push(std::size_t idx, const std::map<std::string, std::vector<DeltaRow>>& base,
                                        RefreshResult& r) {
  auto& n = nodes[idx];
  switch (n.kind) {
    case PlanNode::Kind::Source: {
      auto it = base.find(n.table);
      return it == base.end() ? std::vector<DeltaRow>{} : it->second;
    }
    case PlanNode::Kind::Filter: {
      auto in = push(n.children[0], base, r);
      std::vector<DeltaRow> out;
      for (auto& d : in) {
        bool keep = true;
        for (const auto& [col, cmp] : n.preds) keep = keep && eval_cmp(d.payload[col], cmp.op, cmp.literal);
        if (keep) out.push_back(std::move(d));
      }
      return out;
    }
    case PlanNode::Kind::Project: {
      auto in = push(n.children[0], base, r);
      for (auto& d : in) {
        Row p;
        p.reserve(n.proj.size());
        for (auto c : n.proj) p.push_back(std::move(d.payload[c]));
        d.payload = std::move(p);
      }
      return in;
    }
    case PlanNode::Kind::Join: {
      auto dl = push(n.children[0], base, r);
      auto dr = push(n.children[1], base, r);
      sort_deltas(dl);
      sort_deltas(dr);
      JoinCounters c;
      std::vector<DeltaRow> out;
      if (n.join_type == JoinType::Inner) {
        out = inner_join_delta(dl, n.left, dr, n.right, n.keys, &c);
      } else {
        out = outer_join_delta(n.join_type == JoinType::Left ? JoinSide::Left : JoinSide::Right, dl, n.left, dr, n.right,
                               n.keys, n.shape, n.outer, &c);
      }
      r.probe_rows += c.probe_rows;
      n.left.apply(dl);
      n.right.apply(dr);
      return out;
    }
    case PlanNode::Kind::Aggregate: {
      auto in = push(n.children[0], base, r);
      if (!n.minmax) return apply_delta_agg(n.agg_state, std::move(in), n.agg);
      sort_deltas(in);
      std::map<Row, std::pair<std::optional<Row>, std::uint64_t>, RowLess> touched;
      for (const auto& d : in) {
        Row key;
        for (auto g : n.agg.group_by) key.push_back(d.payload[g]);
        auto& grp = n.mm_groups[key];
        auto [t, fresh] = touched.try_emplace(key, std::nullopt, 0);
        if (fresh && grp.members.size() > 0) t->second.first = grp.derived;
        t->second.second = std::max(t->second.second, d.update_seq);
        grp.members.apply(d);
      }
      std::vector<DeltaRow> out;
      for (auto& [key, t] : touched) {
        auto it = n.mm_groups.find(key);
        auto& grp = it->second;
        if (t.first) out.push_back({key, grp.update_seq, DeltaKind::Delete, *t.first});
        if (grp.members.size() == 0) {
          n.mm_groups.erase(it);
          continue;
        }
        r.probe_rows += grp.members.size();
        Row now = aggregate_rows(key, grp.members.payloads(), n.agg);
        if (t.first && bit_equal(*t.first, now)) {
          out.pop_back();
          continue;
        }
        grp.derived = now;
        grp.update_seq = std::max(grp.update_seq, t.second);
        out.push_back({key, grp.update_seq, DeltaKind::Insert, std::move(now)});
      }
      return out;
    }
  }
  return {};
}

void View::State::audit() const {
  for (const auto& n : nodes) {
    if (n.kind != PlanNode::Kind::Join || n.join_type == JoinType::Inner) continue;
    audit_outer_state(n.outer, n.join_type == JoinType::Left ? n.right : n.left);
  }
}

// ---------------------------------------------------------------- View

View::View(engine::Database& db, ViewDefinition def) : db_(&db), def_(std::move(def)) {
  state_ = State::compile(db, def_);
}

View::~View() = default;
View::View(View&&) noexcept = default;

const std::vector<std::string>& View::columns() const { return state_->nodes[state_->root].cols; }

const Targets& View::refreshed_at() const {
  if (!refreshed_) fail(ErrorCode::NotFound, "view '" + def_.name + "' has not been refreshed");
  return *refreshed_;
}

Targets View::current_targets() const {
  Targets t;
  for (const auto& name : def_.tables()) t[name] = db_->table(name).current_version();
  return t;
}

namespace {

Targets complete_targets(const Targets& given, const Targets& current) {
  Targets out = current;
  for (const auto& [name, v] : given) {
    if (!current.count(name)) fail(ErrorCode::UnknownTable, "view does not read table '" + name + "'");
    out[name] = v;
  }
  return out;
}

std::vector<DeltaRow> snapshot_inserts(const engine::Table& t, std::uint64_t version) {
  std::vector<DeltaRow> out;
  for (auto& e : t.visible_entries(version)) {
    out.push_back({{e.key.document_id, e.key.chunk_id}, e.seq, DeltaKind::Insert, std::move(e.row)});
  }
  return out;
}

std::vector<DeltaRow> change_deltas(const engine::Table& t, std::uint64_t from, std::uint64_t to) {
  std::vector<DeltaRow> out;
  for (auto& c : t.changes(from, to)) {
    Row key{c.key.document_id, c.key.chunk_id};
    if (c.before) out.push_back({key, c.before_seq, DeltaKind::Delete, std::move(*c.before)});
    if (c.after) out.push_back({key, c.after_seq, DeltaKind::Insert, std::move(*c.after)});
  }
  return out;
}

}  // namespace

RefreshResult View::refresh(std::optional<Targets> targets) {
  const auto start = std::chrono::steady_clock::now();
  RefreshResult r;
  r.to = complete_targets(targets.value_or(Targets{}), current_targets());
  if (refreshed_) r.from = *refreshed_;
  if (refreshed_ && *refreshed_ == r.to) {
    r.noop = true;
    return r;
  }
  std::map<std::string, std::vector<DeltaRow>> base;
  for (const auto& [name, to] : r.to) {
    const auto& t = db_->table(name);
    if (!refreshed_) {
      base[name] = snapshot_inserts(t, to);
    } else {
      const auto from = refreshed_->at(name);
      if (to < from) {
        fail(ErrorCode::OutOfRange, "cannot refresh table '" + name + "' backwards from " + std::to_string(from) +
                                        " to " + std::to_string(to));
      }
      if (to > from) base[name] = change_deltas(t, from, to);
    }
    r.delta_rows += base[name].size();
  }
  auto out = state_->push(state_->root, base, r);
  r.output_deltas = out.size();
  state_->output.apply(out);
  refreshed_ = r.to;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  durations_.push_back(r.seconds);
  if (durations_.size() > kMaxDurations) durations_.erase(durations_.begin());
  return r;
}

std::vector<Row> View::rows() const { return state_->output.payloads(); }

std::vector<Row> View::recompute(const Targets& targets, RefreshResult* stats) const {
  View fresh(*db_, def_);
  auto r = fresh.refresh(complete_targets(targets, current_targets()));
  if (stats) *stats = r;
  return fresh.rows();
}

std::uint64_t View::full_scan_rows(const Targets& targets) const {
  const auto full = complete_targets(targets, current_targets());
  std::uint64_t total = 0;
  for (const auto& n : def_.nodes) {
    if (n.kind == PlanNode::Kind::Source) total += db_->table(n.table).visible_entries(full.at(n.table)).size();
  }
  return total;
}

void View::audit() const { state_->audit(); }

void View::restore(const Targets& at) {
  state_ = State::compile(*db_, def_);
  refreshed_.reset();
  auto keep = durations_;
  refresh(at);
  durations_ = std::move(keep);
}

// ---------------------------------------------------------------- catalog

ViewCatalog::ViewCatalog(engine::Database& db) : db_(db) {}

fs::path ViewCatalog::dir() const { return db_.root() / "_views"; }

bool ViewCatalog::has(const std::string& name) const {
  return views_.count(name) || fs::exists(dir() / (name + ".view"));
}

std::vector<std::string> ViewCatalog::names() const {
  std::vector<std::string> out;
  if (fs::exists(dir())) {
    for (const auto& e : fs::directory_iterator(dir())) {
      if (e.path().extension() == ".view") out.push_back(e.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

View& ViewCatalog::create(const std::string& definition_text) {
  auto def = ViewDefinition::parse(definition_text);
  if (has(def.name)) fail(ErrorCode::IoError, "view '" + def.name + "' already exists");
  auto view = std::make_unique<View>(db_, def);
  fs::create_directories(dir());
  const auto text = def.format();
  snf::write_bytes_atomic(dir() / (def.name + ".view"),
                          ByteSpan(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  auto& ref = *view;
  views_[def.name] = std::move(view);
  return ref;
}

View& ViewCatalog::get(const std::string& name) {
  if (auto it = views_.find(name); it != views_.end()) return *it->second;
  const auto path = dir() / (name + ".view");
  if (!fs::exists(path)) fail(ErrorCode::NotFound, "no view named '" + name + "'");
  const auto bytes = snf::read_file_bytes(path);
  auto view = std::make_unique<View>(db_, ViewDefinition::parse(std::string(bytes.begin(), bytes.end())));
  const auto state_path = dir() / (name + ".state.json");
  if (fs::exists(state_path)) {
    std::ifstream in(state_path);
    try {
      auto j = json::parse(in);
      view->set_durations(j.value("durations", std::vector<double>{}));
      if (j.contains("refreshed_at")) view->restore(j.at("refreshed_at").get<Targets>());
    } catch (const json::exception& e) {
      fail(ErrorCode::IoError, "view state " + state_path.string() + ": " + e.what());
    }
  }
  auto& ref = *view;
  views_[name] = std::move(view);
  return ref;
}

void ViewCatalog::save(View& view) {
  json j;
  if (view.materialized()) j["refreshed_at"] = view.refreshed_at();
  j["durations"] = view.durations();
  const auto text = j.dump(2);
  fs::create_directories(dir());
  snf::write_bytes_atomic(dir() / (view.definition().name + ".state.json"),
                          ByteSpan(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  if (view.materialized()) {
    for (const auto& [table, v] : view.refreshed_at()) {
      db_.table(table).set_persistent_pin("view:" + view.definition().name, v);
    }
  }
}

void ViewCatalog::drop(const std::string& name) {
  auto& v = get(name);
  for (const auto& t : v.definition().tables()) db_.table(t).clear_persistent_pin("view:" + name);
  views_.erase(name);
  fs::remove(dir() / (name + ".view"));
  fs::remove(dir() / (name + ".state.json"));
}

}  // namespace minihouse::ivm
