#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "minihouse/common/predicate.hpp"
#include "minihouse/engine/table.hpp"
#include "minihouse/ivm/aggregate.hpp"
#include "minihouse/ivm/join.hpp"
#include "minihouse/ivm/refresh.hpp"

namespace minihouse::ivm {

enum class JoinType { Inner, Left, Right };

struct AggExpr {
  AggFunc func = AggFunc::Count;
  std::optional<std::string> column;  // COUNT(*) when absent
};

struct PlanNode {
  enum class Kind { Source, Filter, Project, Join, Aggregate };
  Kind kind = Kind::Source;
  std::string id;
  std::vector<std::string> inputs;  // child node ids

  std::string table;                  // Source
  Predicate predicate;                // Filter
  std::vector<std::string> columns;   // Project
  JoinType join_type = JoinType::Inner;
  std::vector<std::string> left_keys, right_keys;  // Join
  std::vector<std::string> group_by;  // Aggregate
  std::vector<AggExpr> aggregates;
};

// Line-oriented view text:
//   view <name>
//   source <id> <table>
//   filter <id> <input> where <predicate>
//   project <id> <input> <col>, ...
//   join <id> inner|left|right <left> <right> on <col> = <col> [and ...]
//   aggregate <id> <input> [by <col>, ...] compute <fn>(<col>|*), ...
//   output <id>
// Source columns are named <id>.<column>.
struct ViewDefinition {
  std::string name;
  std::vector<PlanNode> nodes;
  std::string output;

  static ViewDefinition parse(const std::string& text);  // ParseError
  std::string format() const;
  std::vector<std::string> tables() const;  // distinct base tables, sorted
};

using Targets = std::map<std::string, std::uint64_t>;  // base table -> snapshot

struct RefreshResult {
  bool noop = false;
  Targets from;
  Targets to;
  std::uint64_t delta_rows = 0;   // base change rows read
  std::uint64_t probe_rows = 0;   // stored rows touched by join probes
  std::uint64_t output_deltas = 0;
  double seconds = 0;
  std::uint64_t input_rows() const { return delta_rows + probe_rows; }
};

// An incrementally maintained materialized view over tables of one Database.
class View {
 public:
  View(engine::Database& db, ViewDefinition def);
  ~View();
  View(View&&) noexcept;

  const ViewDefinition& definition() const noexcept { return def_; }
  const std::vector<std::string>& columns() const;
  bool materialized() const noexcept { return refreshed_.has_value(); }
  const Targets& refreshed_at() const;
  Targets current_targets() const;

  // Brings the materialization to `targets` (current versions when empty). The first refresh
  // evaluates the whole plan; later ones process only changes since the previous refresh.
  RefreshResult refresh(std::optional<Targets> targets = std::nullopt);

  // Materialized payload rows, in tuple_key order.
  std::vector<Row> rows() const;

  // Evaluates the plan from scratch at `targets` without touching this view's state.
  std::vector<Row> recompute(const Targets& targets, RefreshResult* stats = nullptr) const;
  // Base rows a full recomputation at `targets` has to read.
  std::uint64_t full_scan_rows(const Targets& targets) const;

  // Recounts outer-join match counts from the arrangements; StateInconsistent on mismatch.
  void audit() const;

  const std::vector<double>& durations() const noexcept { return durations_; }
  void set_durations(std::vector<double> d) { durations_ = std::move(d); }
  void restore(const Targets& at);  // rebuild state at `at` (used when loading)

 private:
  struct State;
  engine::Database* db_;
  ViewDefinition def_;
  std::unique_ptr<State> state_;
  std::optional<Targets> refreshed_;
  std::vector<double> durations_;
};

// View definitions and refresh bookkeeping stored under <root>/_views.
class ViewCatalog {
 public:
  explicit ViewCatalog(engine::Database& db);

  View& create(const std::string& definition_text);
  View& get(const std::string& name);  // NotFound when absent
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  void drop(const std::string& name);
  // Persists refresh position and durations, and pins each base table at the refreshed snapshot.
  void save(View& view);

 private:
  std::filesystem::path dir() const;
  engine::Database& db_;
  std::map<std::string, std::unique_ptr<View>> views_;
};

}  // namespace minihouse::ivm
