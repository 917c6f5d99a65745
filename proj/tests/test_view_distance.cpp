#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "viewclean/transport.hpp"
#include "viewclean/view_distance.hpp"

using namespace viewclean;
using testing_support::brute_force_emd;
using testing_support::reference_ground;

TEST_CASE("attribute distance") {
  CHECK(attribute_distance(Value::text("American"), Value::text("American"), AttributeType::kText, 0) == 0.0);
  CHECK(attribute_distance(Value::text("American"), Value::text("French"), AttributeType::kText, 0) == 1.0);
  CHECK(attribute_distance(Value::number(23), Value::number(17), AttributeType::kNumber, 23) ==
        doctest::Approx(0.2609).epsilon(1e-4));
  CHECK(attribute_distance(Value::number(18), Value::number(17), AttributeType::kNumber, 23) ==
        doctest::Approx(0.0435).epsilon(1e-3));
  CHECK(attribute_distance(Value::number(0), Value::number(0), AttributeType::kNumber, 0) == 0.0);
  CHECK(attribute_distance(Value::null(), Value::number(3), AttributeType::kNumber, 3) == 1.0);
  CHECK(attribute_distance(Value::null(), Value::text("x"), AttributeType::kText, 0) == 1.0);
  CHECK(attribute_distance(Value::null(), Value::null(), AttributeType::kText, 0) == 0.0);
}

TEST_CASE("tuple distance") {
  Schema schema = {{"cuisine", AttributeType::kText}, {"count", AttributeType::kNumber}};
  std::vector<double> norms = {0.0, 23.0};
  std::vector<Value> american = {Value::text("American"), Value::number(23)};
  std::vector<Value> french = {Value::text("French"), Value::number(18)};
  std::vector<Value> asian = {Value::text("Asian"), Value::number(17)};
  CHECK(tuple_distance(american, french, schema, norms) == doctest::Approx(1.023).epsilon(1e-3));
  CHECK(tuple_distance(american, asian, schema, norms) == doctest::Approx(1.033).epsilon(1e-3));
  CHECK(tuple_distance(american, american, schema, norms) == 0.0);
}

TEST_CASE("emd of the running example") {
  auto emd = view_emd(testing_support::top3_dirty(), testing_support::top3_clean());
  CHECK(emd.distance == doctest::Approx(1.0 / 69.0).epsilon(1e-9));
  CHECK(std::abs(emd.distance - 0.0143) <= 0.001);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(emd.flow[i][j] == doctest::Approx(i == j ? 1.0 / 3 : 0.0));
  }
  CHECK(emd.ground[0][1] == doctest::Approx(std::sqrt(1 + std::pow(5.0 / 23, 2))));
}

TEST_CASE("identity, symmetry, feasibility and the vertex oracle") {
  testing_support::Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    auto a = testing_support::random_view(rng, 1 + rng.below(4));
    auto b = testing_support::random_view(rng, 1 + rng.below(4));
    CHECK(view_distance(a, a) == 0.0);
    auto ab = view_emd(a, b);
    auto ba = view_emd(b, a);
    CHECK(ab.distance == doctest::Approx(ba.distance).epsilon(1e-12));
    CHECK(ab.distance == doctest::Approx(brute_force_emd(reference_ground(a, b))).epsilon(1e-9));
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < b.size(); ++j) {
        CHECK(ab.flow[i][j] >= 0.0);
        row += ab.flow[i][j];
      }
      CHECK(row == doctest::Approx(1.0 / a.size()).epsilon(1e-12));
      total += row;
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) col += ab.flow[i][j];
      CHECK(col == doctest::Approx(1.0 / b.size()).epsilon(1e-12));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("one row against two rows averages the two distances") {
  ViewResult one;
  one.schema = {{"x", AttributeType::kNumber}};
  one.rows = {{Value::number(10)}};
  ViewResult two = one;
  two.rows = {{Value::number(4)}, {Value::number(7)}};
  CHECK(view_distance(one, two) == doctest::Approx((0.6 + 0.3) / 2));
}

TEST_CASE("empty views and schema mismatch") {
  auto v = testing_support::top3_clean();
  ViewResult empty;
  empty.schema = v.schema;
  CHECK(view_distance(v, empty) == 1.0);
  CHECK(view_distance(empty, v) == 1.0);
  CHECK(view_distance(empty, empty) == 0.0);
  ViewResult other;
  other.schema = {{"x", AttributeType::kNumber}};
  other.rows = {{Value::number(1)}};
  CHECK_THROWS_AS(view_distance(v, other), EvaluationError);
}

TEST_CASE("quality clamps") {
  ViewResult a;
  a.schema = {{"g", AttributeType::kText}, {"h", AttributeType::kText}};
  a.rows = {{Value::text("x"), Value::text("y")}};
  ViewResult b = a;
  b.rows = {{Value::text("p"), Value::text("q")}};
  CHECK(view_distance(a, b) == doctest::Approx(std::sqrt(2.0)));
  CHECK(view_quality(a, b) == 0.0);
  CHECK(view_quality(a, a) == 1.0);
}

TEST_CASE("transport solver") {
  CostMatrix cost(2, 3);
  const double c[2][3] = {{4, 1, 3}, {2, 5, 1}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) cost(i, j) = c[i][j];
  }
  std::vector<std::int64_t> supply = {3, 3};
  std::vector<std::int64_t> demand = {2, 2, 2};
  auto sol = solve_transport(supply, demand, cost);
  std::vector<std::vector<double>> costs = {{4, 1, 3}, {2, 5, 1}};
  CHECK(sol.cost / 6.0 == doctest::Approx(brute_force_emd(costs)));
  std::int64_t moved = 0;
  for (const auto& f : sol.flows) moved += f.amount;
  CHECK(moved == 6);
  std::vector<std::int64_t> unbalanced = {1, 1};
  CHECK_THROWS_AS(solve_transport(unbalanced, demand, cost), std::invalid_argument);
  std::vector<std::int64_t> zero = {0, 6};
  CHECK_THROWS_AS(solve_transport(zero, demand, cost), std::invalid_argument);
}

TEST_CASE("degenerate transport problems") {
  testing_support::Rng rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(5);
    const std::size_t n = 1 + rng.below(5);
    std::vector<std::vector<double>> costs(m, std::vector<double>(n));
    for (auto& row : costs) {
      for (auto& x : row) x = static_cast<double>(rng.below(3));  // many ties
    }
    CostMatrix cm(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) cm(i, j) = costs[i][j];
    }
    std::vector<std::int64_t> supply(m, static_cast<std::int64_t>(n));
    std::vector<std::int64_t> demand(n, static_cast<std::int64_t>(m));
    auto sol = solve_transport(supply, demand, cm);
    CHECK(sol.cost / static_cast<double>(m * n) == doctest::Approx(brute_force_emd(costs)).epsilon(1e-9));
  }
}

TEST_CASE("convergence test") {
  DistanceConfig cfg{0.01, 3};
  CHECK(converged(std::vector<double>{0.005, 0.0, 0.0}, cfg));
  CHECK_FALSE(converged(std::vector<double>{0.0, 0.02, 0.0}, cfg));
  CHECK_FALSE(converged(std::vector<double>{0.0, 0.0}, cfg));
  CHECK(converged(std::vector<double>{0.5, 0.01, 0.0, 0.0}, cfg));
}

TEST_CASE("impact scores") {
  testing_support::Rng rng(8);
  SUBCASE("matches the definition and is zero outside provenance") {
    for (int trial = 0; trial < 20; ++trial) {
      auto rel = testing_support::random_relation(rng, 25);
      auto spec = testing_support::random_spec(rng);
      auto table = view_impact_scores(spec, rel, 1);
      auto prov = provenance(spec, rel);
      CHECK(table.size() == prov.size());
      auto base = evaluate(spec, rel);
      for (const auto& [id, score] : table) {
        CHECK(prov.contains(id));
        CHECK(score >= 0.0);
        CHECK(score == view_distance(base, evaluate(spec, rel.without(id))));
      }
      CHECK(view_impact_scores(spec, rel, 3) == table);
    }
  }
  SUBCASE("count star gives every record the same positive impact") {
    auto rel = testing_support::random_relation(rng, 40);
    ViewSpec spec;
    spec.selection = Predicate::equals("city", Value::text("SF"));
    spec.aggregates = {{AggregateFn::kCountStar, "", "n"}};
    auto table = view_impact_scores(spec, rel);
    REQUIRE(!table.empty());
    for (const auto& [id, score] : table) {
      CHECK(score > 0.0);
      CHECK(score == table.begin()->second);
    }
  }
}
