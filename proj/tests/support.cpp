#include "support.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace testing_support {

using viewclean::AttributeType;
using viewclean::Predicate;
using viewclean::Record;
using viewclean::Schema;
using viewclean::Value;

namespace {

ViewResult cuisine_counts(std::vector<std::pair<std::string, double>> rows) {
  ViewResult v;
  v.schema = {{"cuisine", AttributeType::kText}, {"count", AttributeType::kNumber}};
  for (auto& [c, n] : rows) v.rows.push_back({Value::text(c), Value::number(n)});
  return v;
}

}  // namespace

ViewResult top3_dirty() { return cuisine_counts({{"American", 23}, {"French", 18}, {"Asian", 18}}); }
ViewResult top3_clean() { return cuisine_counts({{"American", 23}, {"French", 18}, {"Asian", 17}}); }

double brute_force_emd(const std::vector<std::vector<double>>& cost) {
  const std::size_t m = cost.size();
  const std::size_t n = cost.front().size();
  const std::size_t nodes = m + n;
  const std::size_t need = nodes - 1;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) edges.emplace_back(i, j);
  }

  std::vector<std::size_t> parent(nodes);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> chosen;

  auto evaluate_tree = [&] {
    std::vector<double> mass(nodes);
    for (std::size_t i = 0; i < m; ++i) mass[i] = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < n; ++j) mass[m + j] = 1.0 / static_cast<double>(n);
    std::vector<int> degree(nodes, 0);
    for (auto e : chosen) {
      ++degree[edges[e].first];
      ++degree[m + edges[e].second];
    }
    std::vector<bool> used(chosen.size(), false);
    double total = 0.0;
    for (std::size_t round = 0; round < chosen.size(); ++round) {
      bool progressed = false;
      for (std::size_t k = 0; k < chosen.size() && !progressed; ++k) {
        if (used[k]) continue;
        const auto [i, j] = edges[chosen[k]];
        std::size_t leaf;
        std::size_t other;
        if (degree[i] == 1) {
          leaf = i;
          other = m + j;
        } else if (degree[m + j] == 1) {
          leaf = m + j;
          other = i;
        } else {
          continue;
        }
        const double f = mass[leaf];
        if (f < -1e-12) return;
        mass[other] -= f;
        mass[leaf] = 0.0;
        total += f * cost[i][j];
        used[k] = true;
        --degree[i];
        --degree[m + j];
        progressed = true;
      }
      if (!progressed) return;
    }
    best = std::min(best, total);
  };

  std::function<void(std::size_t)> extend = [&](std::size_t start) {
    if (chosen.size() == need) {
      evaluate_tree();
      return;
    }
    if (edges.size() - start < need - chosen.size()) return;
    for (std::size_t e = start; e < edges.size(); ++e) {
      const std::size_t a = find(edges[e].first);
      const std::size_t b = find(m + edges[e].second);
      if (a == b) continue;
      parent[a] = b;
      chosen.push_back(e);
      extend(e + 1);
      chosen.pop_back();
      parent[a] = a;
    }
  };
  extend(0);
  return best;
}

std::vector<std::vector<double>> reference_ground(const ViewResult& a, const ViewResult& b) {
  const Schema& schema = a.schema;
  std::vector<double> norm(schema.size(), 0.0);
  for (const auto* view : {&a, &b}) {
    for (const auto& row : view->rows) {
      for (std::size_t c = 0; c < schema.size(); ++c) {
        if (row[c].is_number()) norm[c] = std::max(norm[c], std::abs(row[c].as_number()));
      }
    }
  }
  std::vector<std::vector<double>> out(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < schema.size(); ++c) {
        const Value& x = a.rows[i][c];
        const Value& y = b.rows[j][c];
        double d;
        if (x.is_null() || y.is_null()) {
          d = x.is_null() && y.is_null() ? 0.0 : 1.0;
        } else if (schema[c].type == AttributeType::kText) {
          d = x == y ? 0.0 : 1.0;
        } else {
          d = norm[c] > 0 ? std::min(1.0, std::abs(x.as_number() - y.as_number()) / norm[c]) : 0.0;
        }
        sq += d * d;
      }
      out[i][j] = std::sqrt(sq);
    }
  }
  return out;
}

ViewResult random_view(Rng& rng, std::size_t rows) {
  static const char* labels[] = {"a", "b", "c", "d"};
  ViewResult v;
  v.schema = {{"g", AttributeType::kText}, {"x", AttributeType::kNumber}, {"y", AttributeType::kNumber}};
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Value> row;
    row.push_back(Value::text(labels[rng.below(4)]));
    row.push_back(Value::number(static_cast<double>(rng.below(50))));
    row.push_back(rng.below(8) == 0 ? Value::null() : Value::number(rng.uniform() * 10.0 - 3.0));
    v.rows.push_back(std::move(row));
  }
  return v;
}

Relation random_relation(Rng& rng, std::size_t rows) {
  static const char* cuisines[] = {"American", "French", "Asian", "Italian", "Mexican"};
  static const char* cities[] = {"SF", "LA", "NY"};
  Schema schema = {{"cuisine", AttributeType::kText},
                   {"city", AttributeType::kText},
                   {"rating", AttributeType::kNumber},
                   {"price", AttributeType::kNumber}};
  std::vector<Record> records;
  for (std::size_t r = 0; r < rows; ++r) {
    Record rec;
    rec.id = static_cast<viewclean::RecordId>(r * 3 + rng.below(3));
    rec.values.push_back(Value::text(cuisines[rng.below(5)]));
    rec.values.push_back(Value::text(cities[rng.below(3)]));
    rec.values.push_back(rng.below(6) == 0 ? Value::null() : Value::number(static_cast<double>(1 + rng.below(5))));
    rec.values.push_back(Value::number(static_cast<double>(5 + rng.below(200))));
    records.push_back(std::move(rec));
  }
  return Relation(std::move(schema), std::move(records));
}

ViewSpec random_spec(Rng& rng) {
  static const char* cities[] = {"SF", "LA", "NY"};
  auto atom = [&]() -> Predicate {
    switch (rng.below(4)) {
      case 0:
        return Predicate::equals("city", Value::text(cities[rng.below(3)]));
      case 1:
        return Predicate::contains("cuisine", rng.below(2) ? "an" : "CH");
      case 2:
        return Predicate::less("price", static_cast<double>(20 + rng.below(150)));
      default:
        return Predicate::greater_equal("rating", static_cast<double>(1 + rng.below(5)));
    }
  };
  ViewSpec spec;
  spec.name = "random";
  switch (rng.below(3)) {
    case 0:
      spec.selection = atom();
      break;
    case 1:
      spec.selection = Predicate::all_of({atom(), atom()});
      break;
    default:
      spec.selection = Predicate::any_of({atom(), Predicate::all_of({atom(), atom()})});
      break;
  }
  switch (rng.below(4)) {
    case 0:
      spec.group_by = {"cuisine"};
      spec.aggregates = {{viewclean::AggregateFn::kCountStar, "", "n"}};
      spec.order_by = {{"n", true}};
      spec.limit = 1 + rng.below(4);
      break;
    case 1:
      spec.group_by = {"city"};
      spec.aggregates = {{viewclean::AggregateFn::kAvg, "rating", "avg_rating"}};
      spec.order_by = {{"city", false}};
      break;
    case 2:
      spec.aggregates = {{viewclean::AggregateFn::kCountStar, "", "n"}};
      break;
    default:
      spec.derived = {{"band", "price", {{50.0, "cheap"}, {120.0, "mid"}}, "high"}};
      spec.group_by = {"band"};
      spec.aggregates = {{viewclean::AggregateFn::kCountStar, "", "n"},
                         {viewclean::AggregateFn::kAvg, "price", "avg_price"}};
      spec.order_by = {{"band", false}};
      break;
  }
  return spec;
}

}  // namespace testing_support
