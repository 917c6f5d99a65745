#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewclean/relation.hpp"

namespace viewclean {

// A view that does not type-check against the relation it is applied to.
class EvaluationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Boolean selection tree. Atoms never match a null cell.
struct Predicate {
  enum class Kind { kTrue, kFalse, kEquals, kContains, kLess, kGreaterEqual, kAnd, kOr };

  Kind kind = Kind::kTrue;
  std::string column;
  Value constant;
  std::vector<Predicate> children;

  static Predicate always() { return {}; }
  static Predicate never() { return {Kind::kFalse, {}, {}, {}}; }
  static Predicate equals(std::string column, Value v) {
    return {Kind::kEquals, std::move(column), std::move(v), {}};
  }
  // Case-insensitive substring match, like SQL LIKE '%needle%'.
  static Predicate contains(std::string column, std::string needle) {
    return {Kind::kContains, std::move(column), Value::text(std::move(needle)), {}};
  }
  static Predicate less(std::string column, double bound) {
    return {Kind::kLess, std::move(column), Value::number(bound), {}};
  }
  static Predicate greater_equal(std::string column, double bound) {
    return {Kind::kGreaterEqual, std::move(column), Value::number(bound), {}};
  }
  static Predicate all_of(std::vector<Predicate> children) {
    return {Kind::kAnd, {}, {}, std::move(children)};
  }
  static Predicate any_of(std::vector<Predicate> children) {
    return {Kind::kOr, {}, {}, std::move(children)};
  }
};

// CASE WHEN col < bound THEN label ... ELSE else_label END AS name.
struct BinExpr {
  std::string name;
  std::string column;
  std::vector<std::pair<double, std::string>> cases;
  std::string else_label;
};

enum class AggregateFn { kCountStar, kAvg };

struct Aggregate {
  AggregateFn fn = AggregateFn::kCountStar;
  std::string column;  // AVG only
  std::string alias;
};

struct OrderKey {
  std::string column;
  bool descending = false;
};

struct ViewSpec {
  std::string name;
  Predicate selection;
  std::vector<BinExpr> derived;
  std::vector<std::string> group_by;
  std::vector<Aggregate> aggregates;
  // Output columns; empty or {"*"} means every available column.
  std::vector<std::string> projection;
  std::vector<OrderKey> order_by;
  std::optional<std::size_t> limit;

  bool is_aggregate() const { return !group_by.empty() || !aggregates.empty(); }
};

struct ViewResult {
  Schema schema;
  std::vector<std::vector<Value>> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  bool operator==(const ViewResult&) const = default;
};

// Throws EvaluationError when the spec does not fit the schema.
void validate(const ViewSpec& spec, const Schema& schema);

bool matches(const Predicate& predicate, const Relation& rel, const Record& record);

// selection -> derivation -> grouping/aggregation -> ordering -> limit.
// Ties after the order keys are broken by group key, then by the smallest
// contributing record id.
ViewResult evaluate(const ViewSpec& spec, const Relation& rel);

// Ids of records that satisfy the selection (ordering and limit ignored).
std::set<RecordId> provenance(const ViewSpec& spec, const Relation& rel);

ViewSpec view_spec_from_json(const nlohmann::json& doc);
nlohmann::json view_spec_to_json(const ViewSpec& spec);
ViewSpec load_view_spec(const std::filesystem::path& path);

nlohmann::json view_result_to_json(const ViewResult& result);
ViewResult view_result_from_json(const nlohmann::json& doc);
ViewResult load_view_result(const std::filesystem::path& path);

}  // namespace viewclean
