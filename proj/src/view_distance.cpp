#include "viewclean/view_distance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "viewclean/transport.hpp"

namespace viewclean {

std::vector<double> column_norms(const ViewResult& v1, const ViewResult& v2) {
  std::vector<double> norms(v1.schema.size(), 0.0);
  for (const ViewResult* v : {&v1, &v2}) {
    for (const auto& row : v->rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (row[c].is_number()) norms[c] = std::max(norms[c], std::abs(row[c].as_number()));
      }
    }
  }
  return norms;
}

double attribute_distance(const Value& a, const Value& b, AttributeType type, double norm) {
  if (a.is_null() || b.is_null()) return a.is_null() && b.is_null() ? 0.0 : 1.0;
  if (type == AttributeType::kText) return a == b ? 0.0 : 1.0;
  if (norm <= 0.0) return 0.0;
  return std::min(1.0, std::abs(a.as_number() - b.as_number()) / norm);
}

double tuple_distance(std::span<const Value> a, std::span<const Value> b, const Schema& schema,
                      std::span<const double> norms) {
  if (a.size() != schema.size() || b.size() != schema.size() || norms.size() != schema.size()) {
    throw EvaluationError("tuple arity does not match schema");
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const double d = attribute_distance(a[c], b[c], schema[c].type, norms[c]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

namespace {

void require_same_schema(const ViewResult& v1, const ViewResult& v2) {
  if (v1.schema.size() != v2.schema.size()) throw EvaluationError("views have different arity");
  for (std::size_t c = 0; c < v1.schema.size(); ++c) {
    if (v1.schema[c].type != v2.schema[c].type) {
      throw EvaluationError("views disagree on the type of column " + std::to_string(c));
    }
  }
}

}  // namespace

ViewEmd view_emd(const ViewResult& from, const ViewResult& to) {
  require_same_schema(from, to);
  ViewEmd out;
  if (from.empty() || to.empty()) {
    out.distance = from.empty() && to.empty() ? 0.0 : 1.0;
    return out;
  }
  const std::size_t m = from.size();
  const std::size_t n = to.size();
  const auto norms = column_norms(from, to);

  CostMatrix cost(m, n);
  out.ground.assign(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost(i, j) = tuple_distance(from.rows[i], to.rows[j], from.schema, norms);
      out.ground[i][j] = cost(i, j);
    }
  }

  // Row weights 1/m and 1/n, scaled to integers: each source row ships n/g
  // units and each sink row receives m/g, for a total mass of m*n/g.
  const auto g = static_cast<std::int64_t>(std::gcd(m, n));
  const std::vector<std::int64_t> supply(m, static_cast<std::int64_t>(n) / g);
  const std::vector<std::int64_t> demand(n, static_cast<std::int64_t>(m) / g);
  const double total = static_cast<double>(m) * static_cast<double>(n) / static_cast<double>(g);

  const auto solution = solve_transport(supply, demand, cost);
  out.flow.assign(m, std::vector<double>(n, 0.0));
  for (const auto& f : solution.flows) out.flow[f.from][f.to] = static_cast<double>(f.amount) / total;
  out.distance = solution.cost / total;
  return out;
}

double view_distance(const ViewResult& v1, const ViewResult& v2) {
  if (v1 == v2) {
    require_same_schema(v1, v2);
    return 0.0;
  }
  return view_emd(v1, v2).distance;
}

double view_quality(const ViewResult& current, const ViewResult& clean) {
  return 1.0 - std::clamp(view_distance(current, clean), 0.0, 1.0);
}

ImpactTable view_impact_scores(const ViewSpec& spec, const Relation& rel, std::size_t workers) {
  const auto ids = provenance(spec, rel);
  const std::vector<RecordId> todo(ids.begin(), ids.end());
  const ViewResult full = evaluate(spec, rel);
  std::vector<double> scores(todo.size(), 0.0);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      scores[k] = view_distance(full, evaluate(spec, rel.without(todo[k])));
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(1, todo.size()));
  if (workers <= 1) {
    work(0, todo.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (todo.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(todo.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }

  ImpactTable table;
  for (std::size_t k = 0; k < todo.size(); ++k) table.emplace(todo[k], scores[k]);
  return table;
}

bool converged(std::span<const double> history, const DistanceConfig& cfg) {
  if (cfg.window == 0 || history.size() < cfg.window) return false;
  return std::all_of(history.end() - static_cast<std::ptrdiff_t>(cfg.window), history.end(),
                     [&](double d) { return d <= cfg.epsilon; });
}

}  // namespace viewclean
