#include <cmath>
#include <random>

#include "minihouse/bench/oracles.hpp"
#include "minihouse/bench/workloads.hpp"
#include "minihouse/common/error.hpp"
#include "minihouse/compaction/controller.hpp"
#include "minihouse/engine/table.hpp"
#include "minihouse/ivm/refresh.hpp"
#include "minihouse/ivm/view.hpp"

namespace minihouse::bench {

namespace fs = std::filesystem;
using engine::RowKey;

namespace {

struct Template {
  const char* name;
  const char* body;  // lines after "view v"
};

const Template kTemplates[] = {
    {"filter", "source o orders\nfilter f o where o.amount > 40 and o.tag != 'z'\noutput f\n"},
    {"inner_join", "source o orders\nsource c customers\njoin j inner o c on o.cust = c.document_id\noutput j\n"},
    {"left_join", "source o orders\nsource c customers\njoin j left o c on o.cust = c.document_id\noutput j\n"},
    {"right_join", "source o orders\nsource c customers\njoin j right o c on o.cust = c.document_id\noutput j\n"},
    {"group_sum", "source o orders\naggregate a o by o.tag compute count(*), sum(o.amount), avg(o.price), count(o.price)\n"
                  "output a\n"},
    {"filter_join_sum",
     "source o orders\nsource c customers\nfilter f o where o.amount >= 10\n"
     "join j inner f c on o.cust = c.document_id\n"
     "aggregate a j by c.region compute count(*), sum(o.amount), avg(o.amount), sum(o.price)\noutput a\n"},
    {"outer_join_count",
     "source o orders\nsource c customers\njoin j left c o on c.document_id = o.cust\n"
     "aggregate a j by c.region compute count(*), count(o.amount), sum(o.amount)\noutput a\n"},
    {"project_join",
     "source o orders\nsource c customers\nfilter f c where c.tier < 3\n"
     "join j right o f on o.cust = c.document_id\nproject p j o.amount, c.region, c.tier\noutput p\n"},
    {"global_agg", "source o orders\nfilter f o where o.price > 20.5\naggregate a f compute count(*), sum(o.price), avg(o.amount)\n"
                   "output a\n"},
    {"min_max", "source o orders\naggregate a o by o.tag compute min(o.amount), max(o.price), count(*)\noutput a\n"},
};

const std::vector<std::string> kTags = {"a", "b", "c", "z"};
const std::vector<std::string> kRegions = {"north", "south", "east", "west", "centre"};

using Model = std::map<RowKey, Row>;

struct Workbench {
  engine::Database db;
  engine::Table* orders = nullptr;
  engine::Table* customers = nullptr;
  Model m_orders, m_customers;
  std::mt19937_64 rng;
  std::int64_t next_order = 1;
  std::int64_t next_customer = 1;
  std::int64_t customer_space = 1;

  Workbench(const fs::path& dir, std::uint64_t seed)
      : db(dir, [] {
          engine::TableOptions o;
          o.sync_wal = false;
          o.segment_group_rows = 64;
          return o;
        }()),
        rng(seed) {
    orders = &db.create_table(engine::TableDef::make("orders", {{"cust", ColumnType::Int64, true, {}},
                                                                  {"amount", ColumnType::Int64, true, {}},
                                                                  {"price", ColumnType::Float64, true, {}},
                                                                  {"tag", ColumnType::String, true, {}}}));
    customers = &db.create_table(
        engine::TableDef::make("customers", {{"region", ColumnType::String, true, {}}, {"tier", ColumnType::Int64, true, {}}}));
  }

  std::uint64_t pick(std::uint64_t n) { return n ? rng() % n : 0; }
  bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

  Row order_row(std::int64_t id) {
    Value cust = chance(0.05) ? Value{} : Value(static_cast<std::int64_t>(1 + pick(customer_space + 2)));
    Value amount = chance(0.05) ? Value{} : Value(static_cast<std::int64_t>(pick(100)));
    Value price;
    if (!chance(0.05)) price = static_cast<double>(pick(10000)) / 100.0 + (chance(0.1) ? 1e-9 : 0.0);
    Value tag = chance(0.05) ? Value{} : Value(kTags[pick(kTags.size())]);
    return {id, std::int64_t{0}, cust, amount, price, tag};
  }

  Row customer_row(std::int64_t id) {
    Value region = chance(0.05) ? Value{} : Value(kRegions[pick(kRegions.size())]);
    Value tier = chance(0.05) ? Value{} : Value(static_cast<std::int64_t>(pick(5)));
    return {id, std::int64_t{0}, region, tier};
  }

  static void put(engine::Table& t, engine::Txn& txn, Model& m, Row row) {
    RowKey k{std::get<std::int64_t>(row[0]), std::get<std::int64_t>(row[1])};
    t.write_row(txn, row);
    m[k] = std::move(row);
  }

  void load(std::size_t n_orders, std::size_t n_customers) {
    customer_space = static_cast<std::int64_t>(n_customers);
    auto tc = customers->begin_txn();
    for (std::size_t i = 0; i < n_customers; ++i) put(*customers, tc, m_customers, customer_row(next_customer++));
    customers->commit(tc);
    // Orders arrive in a few commits so changes() spans several versions.
    std::size_t done = 0;
    while (done < n_orders) {
      const std::size_t batch = std::min<std::size_t>(n_orders - done, 1 + pick(n_orders / 2 + 1));
      auto t = orders->begin_txn();
      for (std::size_t i = 0; i < batch; ++i) put(*orders, t, m_orders, order_row(next_order++));
      orders->commit(t);
      done += batch;
      if (chance(0.5)) orders->flush_now();
    }
  }

  // Rewrites, deletes and inserts touching at most 20% of the table, over one to three commits.
  template <class MakeRow>
  void mutate(engine::Table& t, Model& m, std::int64_t& next_id, MakeRow make_row) {
    const std::size_t budget = std::max<std::size_t>(1, m.size() / 5);
    const std::size_t n = 1 + pick(budget);
    std::vector<RowKey> keys;
    for (const auto& [k, _] : m) keys.push_back(k);
    std::shuffle(keys.begin(), keys.end(), rng);
    std::size_t used = 0;
    const int commits = 1 + static_cast<int>(pick(3));
    for (int c = 0; c < commits; ++c) {
      auto txn = t.begin_txn();
      const std::size_t share = c + 1 == commits ? n - std::min(n, (n / commits) * c) : n / commits;
      for (std::size_t i = 0; i < share; ++i) {
        const auto op = pick(3);
        if (op == 0 || used >= keys.size()) {
          put(t, txn, m, make_row(next_id++));
        } else if (op == 1) {
          const auto k = keys[used++];
          if (!m.count(k)) continue;
          t.delete_row(txn, k);
          m.erase(k);
        } else {
          const auto k = keys[used++];
          if (!m.count(k)) continue;
          put(t, txn, m, make_row(k.document_id));
        }
      }
      t.commit(txn);
      if (chance(0.4)) t.flush_now();
    }
    if (chance(0.3)) {
      compaction::ControllerConfig cfg;
      cfg.n_star = 1;
      auto plan = compaction::plan_compaction(t.live_segments(engine::SegmentKind::Delta), 1.0, cfg);
      if (plan) compaction::execute_merge(*plan, t);
    }
  }

  std::map<std::string, std::vector<Row>> model_tables() const {
    std::map<std::string, std::vector<Row>> out;
    for (const auto& [_, r] : m_orders) out["orders"].push_back(r);
    for (const auto& [_, r] : m_customers) out["customers"].push_back(r);
    out["orders"];
    out["customers"];
    return out;
  }

  std::map<std::string, std::vector<std::string>> columns() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto* t : {orders, customers}) {
      for (const auto& c : t->def().schema.columns) out[t->def().name].push_back(c.name);
    }
    return out;
  }
};

}  // namespace

IvmWorkloadResult run_ivm_workload(std::uint64_t seed, const fs::path& dir) {
  IvmWorkloadResult res;
  fs::remove_all(dir);
  Workbench wb(dir, seed);
  const auto& tpl = kTemplates[seed % std::size(kTemplates)];
  res.plan = tpl.name;
  wb.load(wb.pick(501), 1 + wb.pick(150));
  auto def = ivm::ViewDefinition::parse(std::string("view v\n") + tpl.body);
  ivm::View view(wb.db, def);
  const auto cols = wb.columns();

  auto compare = [&](int round) {
    ++res.refreshes;
    view.audit();
    auto want = evaluate_view(def, wb.model_tables(), cols);
    auto got = view.rows();
    res.output_rows += got.size();
    if (!ivm::same_multiset(got, want)) {
      ++res.mismatches;
      if (res.first_mismatch.empty()) {
        res.first_mismatch = "seed " + std::to_string(seed) + " plan " + tpl.name + " round " + std::to_string(round) +
                             ": view " + std::to_string(got.size()) + " rows, oracle " + std::to_string(want.size());
      }
    }
  };

  view.refresh();
  compare(0);
  for (int round = 1; round <= 4; ++round) {
    if (wb.chance(0.8) || wb.m_orders.empty()) wb.mutate(*wb.orders, wb.m_orders, wb.next_order, [&](std::int64_t id) { return wb.order_row(id); });
    if (wb.chance(0.6)) {
      wb.mutate(*wb.customers, wb.m_customers, wb.next_customer, [&](std::int64_t id) { return wb.customer_row(id); });
    }
    view.refresh();
    compare(round);
  }
  return res;
}

WorkBound measure_ivm_work(double update_ratio, std::uint64_t seed, const fs::path& dir) {
  fs::remove_all(dir);
  Workbench wb(dir, seed);
  wb.load(4000, 1000);
  wb.orders->flush_now();
  auto def = ivm::ViewDefinition::parse(std::string("view v\n") + kTemplates[5].body);
  ivm::View view(wb.db, def);
  view.refresh();

  std::vector<RowKey> keys;
  for (const auto& [k, _] : wb.m_orders) keys.push_back(k);
  std::shuffle(keys.begin(), keys.end(), wb.rng);
  const auto n = static_cast<std::size_t>(std::llround(update_ratio * static_cast<double>(keys.size())));
  auto txn = wb.orders->begin_txn();
  for (std::size_t i = 0; i < n; ++i) {
    Row r = wb.m_orders.at(keys[i]);
    r[3] = static_cast<std::int64_t>(wb.pick(100));
    Workbench::put(*wb.orders, txn, wb.m_orders, std::move(r));
  }
  wb.orders->commit(txn);

  WorkBound w;
  w.update_ratio = update_ratio;
  auto r = view.refresh();
  w.incremental_rows = r.input_rows();
  w.full_scan_rows = view.full_scan_rows(r.to);
  if (!ivm::same_multiset(view.rows(), evaluate_view(def, wb.model_tables(), wb.columns()))) {
    fail(ErrorCode::StateInconsistent, "work-bound view diverged from recompute");
  }
  return w;
}

Check check_ivm(const BenchOptions& o) {
  Check c;
  c.id = 5;
  c.name = "ivm_equivalence";
  const std::size_t workloads = o.scaled(1000, 20);
  std::uint64_t mismatches = 0, refreshes = 0, rows = 0;
  std::map<std::string, std::uint64_t> per_plan;
  std::string first;
  for (std::size_t i = 0; i < workloads; ++i) {
    auto r = run_ivm_workload(o.seed * 1000003 + i, o.scratch / "ivm");
    mismatches += r.mismatches;
    refreshes += r.refreshes;
    rows += r.output_rows;
    per_plan[r.plan] += 1;
    if (first.empty()) first = r.first_mismatch;
  }
  fs::remove_all(o.scratch / "ivm");
  c.metrics["workloads"] = workloads;
  c.metrics["refreshes"] = refreshes;
  c.metrics["view_rows_compared"] = rows;
  c.metrics["mismatches"] = mismatches;
  c.metrics["plans"] = per_plan;
  bool bound_ok = true;
  auto& wb = c.metrics["work_bound"] = nlohmann::ordered_json::array();
  for (double ratio : {0.025, 0.05, 0.10}) {
    auto w = measure_ivm_work(ratio, o.seed, o.scratch / "ivm-work");
    bound_ok = bound_ok && w.ratio() <= 0.3;
    wb.push_back({{"update_ratio", ratio},
                  {"incremental_rows", w.incremental_rows},
                  {"full_scan_rows", w.full_scan_rows},
                  {"ratio", std::round(w.ratio() * 1e6) / 1e6}});
  }
  fs::remove_all(o.scratch / "ivm-work");
  c.pass = mismatches == 0 && bound_ok;
  c.detail = std::to_string(workloads) + " workloads, " + std::to_string(mismatches) + " mismatches" +
             (bound_ok ? "; work ratio <= 0.3 at all update ratios" : "; work bound exceeded") +
             (first.empty() ? "" : "; first: " + first);
  return c;
}

Check check_refresh_controller(const BenchOptions& o) {
  Check c;
  c.id = 6;
  c.name = "refresh_controller";
  ivm::RefreshConfig w;
  w.k = 2;
  w.dt_min = 5;
  w.dt_base = 60;
  w.alpha = 0.5;
  w.source = ivm::CostSource::Last;
  const double ex1 = ivm::next_refresh_interval({10}, 10, 0.0, w);
  const double ex2 = ivm::next_refresh_interval({1}, 1, 0.0, w);
  const auto ex3 = ivm::refresh_interval_trace({60}, 60, 1.0, w);
  bool worked = std::abs(ex1 - 20) <= 1e-12 && std::abs(ex2 - 5) <= 1e-12 && std::abs(ex3.dt_max - 90) <= 1e-12 &&
                std::abs(ex3.interval - 90) <= 1e-12;

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0, 1);
  const std::size_t points = o.scaled(1000, 100);
  std::uint64_t violations = 0;
  for (std::size_t i = 0; i < points; ++i) {
    ivm::RefreshConfig cfg;
    cfg.k = 0.1 + 4 * u01(rng);
    cfg.dt_min = 0.5 + 10 * u01(rng);
    cfg.dt_base = cfg.dt_min + 100 * u01(rng);
    cfg.alpha = 2 * u01(rng);
    cfg.window = 1 + rng() % 8;
    std::vector<double> hist;
    for (std::size_t j = 0, n = 1 + rng() % 10; j < n; ++j) hist.push_back(200 * u01(rng));
    const double u = u01(rng);
    const double dt = ivm::next_refresh_interval(hist, hist.back(), u, cfg);
    // Hand evaluation of the average-cost rule.
    const std::size_t take = std::min<std::size_t>(cfg.window, hist.size());
    double sum = 0;
    for (std::size_t j = hist.size() - take; j < hist.size(); ++j) sum += hist[j];
    const double hi = cfg.dt_base * (1 + cfg.alpha * u);
    const double want = std::min(std::max(cfg.k * (sum / take), cfg.dt_min), hi);
    if (std::abs(dt - want) > 1e-12 * std::max(1.0, want)) ++violations;
    if (dt < cfg.dt_min - 1e-12 || dt > hi + 1e-12) ++violations;
    auto more = hist;
    for (auto& h : more) h = h * 1.5 + 1;
    if (ivm::next_refresh_interval(more, more.back(), u, cfg) < dt - 1e-12) ++violations;
    if (ivm::next_refresh_interval(hist, hist.back(), std::min(1.0, u + 0.2), cfg) < dt - 1e-12) ++violations;
  }
  c.metrics["worked_examples"] = {ex1, ex2, ex3.interval};
  c.metrics["grid_points"] = points;
  c.metrics["violations"] = violations;
  c.pass = worked && violations == 0;
  c.detail = std::string(worked ? "worked examples 20, 5, 90 match" : "worked example mismatch") + "; " +
             std::to_string(violations) + " law violations on " + std::to_string(points) + " points";
  return c;
}

}  // namespace minihouse::bench
