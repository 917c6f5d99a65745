#include "viewclean/view.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace viewclean {

namespace {

using json = nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const Column& column_of(const Schema& schema, const std::string& name) {
  for (const auto& c : schema) {
    if (c.name == name) return c;
  }
  throw EvaluationError("view references unknown column '" + name + "'");
}

void validate_predicate(const Predicate& p, const Schema& schema) {
  using K = Predicate::Kind;
  switch (p.kind) {
    case K::kTrue:
    case K::kFalse:
      return;
    case K::kAnd:
    case K::kOr:
      for (const auto& c : p.children) validate_predicate(c, schema);
      return;
    case K::kEquals: {
      const auto& col = column_of(schema, p.column);
      const bool ok = col.type == AttributeType::kText ? p.constant.is_text() : p.constant.is_number();
      if (!ok) throw EvaluationError("equality on '" + p.column + "' compares against wrong type");
      return;
    }
    case K::kContains:
      if (column_of(schema, p.column).type != AttributeType::kText || !p.constant.is_text()) {
        throw EvaluationError("substring match on non-text column '" + p.column + "'");
      }
      return;
    case K::kLess:
    case K::kGreaterEqual:
      if (column_of(schema, p.column).type != AttributeType::kNumber || !p.constant.is_number()) {
        throw EvaluationError("range comparison on non-numeric column '" + p.column + "'");
      }
      return;
  }
}

// Base schema extended with the derived bin columns.
Schema derived_schema(const ViewSpec& spec, const Schema& base) {
  Schema out = base;
  for (const auto& bin : spec.derived) {
    if (column_of(base, bin.column).type != AttributeType::kNumber) {
      throw EvaluationError("bin source '" + bin.column + "' is not numeric");
    }
    for (std::size_t i = 1; i < bin.cases.size(); ++i) {
      if (!(bin.cases[i - 1].first < bin.cases[i].first)) {
        throw EvaluationError("bin bounds of '" + bin.name + "' are not strictly increasing");
      }
    }
    for (const auto& c : out) {
      if (c.name == bin.name) throw EvaluationError("derived column '" + bin.name + "' shadows a column");
    }
    out.push_back({bin.name, AttributeType::kText});
  }
  return out;
}

// Columns available before projection.
Schema output_candidates(const ViewSpec& spec, const Schema& extended) {
  if (!spec.is_aggregate()) return extended;
  Schema out;
  for (const auto& g : spec.group_by) out.push_back(column_of(extended, g));
  for (const auto& a : spec.aggregates) {
    if (a.fn == AggregateFn::kAvg && column_of(extended, a.column).type != AttributeType::kNumber) {
      throw EvaluationError("AVG over non-numeric column '" + a.column + "'");
    }
    if (a.alias.empty()) throw EvaluationError("aggregate without an output name");
    out.push_back({a.alias, AttributeType::kNumber});
  }
  return out;
}

std::vector<std::size_t> projection_indices(const ViewSpec& spec, const Schema& candidates) {
  std::vector<std::size_t> idx;
  const bool star = spec.projection.empty() ||
                    (spec.projection.size() == 1 && spec.projection[0] == "*");
  if (star) {
    for (std::size_t i = 0; i < candidates.size(); ++i) idx.push_back(i);
    return idx;
  }
  for (const auto& name : spec.projection) {
    auto it = std::find_if(candidates.begin(), candidates.end(),
                           [&](const Column& c) { return c.name == name; });
    if (it == candidates.end()) throw EvaluationError("projected column '" + name + "' is not available");
    idx.push_back(static_cast<std::size_t>(it - candidates.begin()));
  }
  return idx;
}

Value bin_label(const BinExpr& bin, const Value& v) {
  if (v.is_number()) {
    for (const auto& [bound, label] : bin.cases) {
      if (v.as_number() < bound) return Value::text(label);
    }
  }
  return Value::text(bin.else_label);
}

struct Row {
  std::vector<Value> values;     // candidate columns
  std::vector<Value> group_key;  // empty for non-aggregate views
  RecordId min_record = 0;
};

}  // namespace

void validate(const ViewSpec& spec, const Schema& schema) {
  validate_predicate(spec.selection, schema);
  const Schema extended = derived_schema(spec, schema);
  for (const auto& g : spec.group_by) column_of(extended, g);
  const Schema candidates = output_candidates(spec, extended);
  const auto proj = projection_indices(spec, candidates);
  for (const auto& key : spec.order_by) {
    const bool in_output = std::any_of(proj.begin(), proj.end(), [&](std::size_t i) {
      return candidates[i].name == key.column;
    });
    if (!in_output) throw EvaluationError("order-by column '" + key.column + "' is not in the output");
  }
  if (spec.limit && *spec.limit == 0) throw EvaluationError("limit must be positive");
}

bool matches(const Predicate& p, const Relation& rel, const Record& record) {
  using K = Predicate::Kind;
  switch (p.kind) {
    case K::kTrue:
      return true;
    case K::kFalse:
      return false;
    case K::kAnd:
      return std::all_of(p.children.begin(), p.children.end(),
                         [&](const Predicate& c) { return matches(c, rel, record); });
    case K::kOr:
      return std::any_of(p.children.begin(), p.children.end(),
                         [&](const Predicate& c) { return matches(c, rel, record); });
    default:
      break;
  }
  const Value& v = record.values[rel.require_column(p.column)];
  if (v.is_null()) return false;
  switch (p.kind) {
    case K::kEquals:
      return v == p.constant;
    case K::kContains:
      return lower(v.as_text()).find(lower(p.constant.as_text())) != std::string::npos;
    case K::kLess:
      return v.as_number() < p.constant.as_number();
    case K::kGreaterEqual:
      return v.as_number() >= p.constant.as_number();
    default:
      return false;
  }
}

ViewResult evaluate(const ViewSpec& spec, const Relation& rel) {
  validate(spec, rel.schema());
  const Schema extended = derived_schema(spec, rel.schema());
  const Schema candidates = output_candidates(spec, extended);
  const auto proj = projection_indices(spec, candidates);

  std::vector<std::size_t> bin_sources;
  for (const auto& bin : spec.derived) bin_sources.push_back(rel.require_column(bin.column));

  std::vector<Row> rows;
  if (!spec.is_aggregate()) {
    for (const auto& r : rel.records()) {
      if (!matches(spec.selection, rel, r)) continue;
      Row row;
      row.values = r.values;
      for (std::size_t b = 0; b < spec.derived.size(); ++b) {
        row.values.push_back(bin_label(spec.derived[b], r.values[bin_sources[b]]));
      }
      row.min_record = r.id;
      rows.push_back(std::move(row));
    }
  } else {
    std::vector<std::size_t> group_idx;
    for (const auto& g : spec.group_by) {
      group_idx.push_back(static_cast<std::size_t>(
          std::find_if(extended.begin(), extended.end(), [&](const Column& c) { return c.name == g; }) -
          extended.begin()));
    }
    std::vector<std::size_t> avg_idx;
    for (const auto& a : spec.aggregates) {
      avg_idx.push_back(a.fn == AggregateFn::kAvg ? rel.require_column(a.column) : 0);
    }
    struct Acc {
      std::size_t count = 0;
      std::vector<double> sums;
      std::vector<std::size_t> non_null;
      RecordId min_record = 0;
    };
    std::map<std::vector<Value>, Acc> groups;
    for (const auto& r : rel.records()) {
      if (!matches(spec.selection, rel, r)) continue;
      std::vector<Value> ext = r.values;
      for (std::size_t b = 0; b < spec.derived.size(); ++b) {
        ext.push_back(bin_label(spec.derived[b], r.values[bin_sources[b]]));
      }
      std::vector<Value> key;
      for (auto gi : group_idx) key.push_back(ext[gi]);
      auto [it, inserted] = groups.try_emplace(std::move(key));
      Acc& acc = it->second;
      if (inserted) {
        acc.sums.assign(spec.aggregates.size(), 0.0);
        acc.non_null.assign(spec.aggregates.size(), 0);
        acc.min_record = r.id;
      }
      acc.min_record = std::min(acc.min_record, r.id);
      ++acc.count;
      for (std::size_t a = 0; a < spec.aggregates.size(); ++a) {
        if (spec.aggregates[a].fn != AggregateFn::kAvg) continue;
        const Value& v = r.values[avg_idx[a]];
        if (v.is_null()) continue;
        acc.sums[a] += v.as_number();
        ++acc.non_null[a];
      }
    }
    if (groups.empty() && spec.group_by.empty()) {
      Acc& acc = groups[{}];
      acc.sums.assign(spec.aggregates.size(), 0.0);
      acc.non_null.assign(spec.aggregates.size(), 0);
    }
    for (const auto& [key, acc] : groups) {
      Row row;
      row.values = key;
      for (std::size_t a = 0; a < spec.aggregates.size(); ++a) {
        if (spec.aggregates[a].fn == AggregateFn::kCountStar) {
          row.values.push_back(Value::number(static_cast<double>(acc.count)));
        } else if (acc.non_null[a] == 0) {
          row.values.push_back(Value::null());
        } else {
          row.values.push_back(Value::number(acc.sums[a] / static_cast<double>(acc.non_null[a])));
        }
      }
      row.group_key = key;
      row.min_record = acc.min_record;
      rows.push_back(std::move(row));
    }
  }

  std::vector<std::pair<std::size_t, bool>> order;
  for (const auto& key : spec.order_by) {
    auto it = std::find_if(candidates.begin(), candidates.end(),
                           [&](const Column& c) { return c.name == key.column; });
    order.emplace_back(static_cast<std::size_t>(it - candidates.begin()), key.descending);
  }
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    for (const auto& [col, desc] : order) {
      auto cmp = a.values[col] <=> b.values[col];
      if (cmp != 0) return desc ? cmp > 0 : cmp < 0;
    }
    if (auto cmp = a.group_key <=> b.group_key; cmp != 0) return cmp < 0;
    return a.min_record < b.min_record;
  });
  if (spec.limit && rows.size() > *spec.limit) rows.resize(*spec.limit);

  ViewResult result;
  for (auto i : proj) result.schema.push_back(candidates[i]);
  result.rows.reserve(rows.size());
  for (auto& row : rows) {
    std::vector<Value> out;
    out.reserve(proj.size());
    for (auto i : proj) out.push_back(std::move(row.values[i]));
    result.rows.push_back(std::move(out));
  }
  return result;
}

std::set<RecordId> provenance(const ViewSpec& spec, const Relation& rel) {
  validate(spec, rel.schema());
  std::set<RecordId> ids;
  for (const auto& r : rel.records()) {
    if (matches(spec.selection, rel, r)) ids.insert(r.id);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// JSON documents

namespace {

Value value_from_json(const json& j) {
  if (j.is_null()) return Value::null();
  if (j.is_number()) return Value::number(j.get<double>());
  if (j.is_string()) return Value::text(j.get<std::string>());
  throw ConfigError("unsupported constant " + j.dump());
}

json value_to_json(const Value& v) {
  if (v.is_null()) return nullptr;
  if (v.is_number()) return v.as_number();
  return v.as_text();
}

Predicate predicate_from_json(const json& j) {
  if (j.is_boolean()) return j.get<bool>() ? Predicate::always() : Predicate::never();
  if (!j.is_object() || j.size() != 1) throw ConfigError("predicate must be a single-key object: " + j.dump());
  const auto& [op, body] = *j.items().begin();
  if (op == "and" || op == "or") {
    std::vector<Predicate> children;
    for (const auto& c : body) children.push_back(predicate_from_json(c));
    return op == "and" ? Predicate::all_of(std::move(children)) : Predicate::any_of(std::move(children));
  }
  const auto column = body.at("column").get<std::string>();
  const auto& value = body.at("value");
  if (op == "eq") return Predicate::equals(column, value_from_json(value));
  if (op == "contains") return Predicate::contains(column, value.get<std::string>());
  if (op == "lt") return Predicate::less(column, value.get<double>());
  if (op == "ge") return Predicate::greater_equal(column, value.get<double>());
  throw ConfigError("unknown predicate operator '" + op + "'");
}

json predicate_to_json(const Predicate& p) {
  using K = Predicate::Kind;
  switch (p.kind) {
    case K::kTrue:
      return true;
    case K::kFalse:
      return false;
    case K::kAnd:
    case K::kOr: {
      json arr = json::array();
      for (const auto& c : p.children) arr.push_back(predicate_to_json(c));
      return {{p.kind == K::kAnd ? "and" : "or", arr}};
    }
    case K::kEquals:
      return {{"eq", {{"column", p.column}, {"value", value_to_json(p.constant)}}}};
    case K::kContains:
      return {{"contains", {{"column", p.column}, {"value", p.constant.as_text()}}}};
    case K::kLess:
      return {{"lt", {{"column", p.column}, {"value", p.constant.as_number()}}}};
    case K::kGreaterEqual:
      return {{"ge", {{"column", p.column}, {"value", p.constant.as_number()}}}};
  }
  return true;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace

ViewSpec view_spec_from_json(const json& doc) {
  try {
    ViewSpec spec;
    spec.name = doc.value("name", "");
    spec.selection = doc.contains("where") ? predicate_from_json(doc["where"]) : Predicate::always();
    for (const auto& b : doc.value("bins", json::array())) {
      BinExpr bin;
      bin.name = b.at("as").get<std::string>();
      bin.column = b.at("column").get<std::string>();
      for (const auto& c : b.at("cases")) {
        bin.cases.emplace_back(c.at("lt").get<double>(), c.at("label").get<std::string>());
      }
      bin.else_label = b.at("else").get<std::string>();
      spec.derived.push_back(std::move(bin));
    }
    spec.group_by = doc.value("group_by", std::vector<std::string>{});
    for (const auto& a : doc.value("aggregates", json::array())) {
      Aggregate agg;
      const auto fn = a.at("fn").get<std::string>();
      if (fn == "count") {
        agg.fn = AggregateFn::kCountStar;
      } else if (fn == "avg") {
        agg.fn = AggregateFn::kAvg;
        agg.column = a.at("column").get<std::string>();
      } else {
        throw ConfigError("unknown aggregate '" + fn + "'");
      }
      agg.alias = a.value("as", fn);
      spec.aggregates.push_back(std::move(agg));
    }
    spec.projection = doc.value("select", std::vector<std::string>{});
    for (const auto& o : doc.value("order_by", json::array())) {
      const auto dir = o.value("dir", "asc");
      if (dir != "asc" && dir != "desc") throw ConfigError("order direction must be asc or desc");
      spec.order_by.push_back({o.at("column").get<std::string>(), dir == "desc"});
    }
    if (doc.contains("limit") && !doc["limit"].is_null()) {
      const auto limit = doc["limit"].get<long long>();
      if (limit <= 0) throw ConfigError("limit must be positive");
      spec.limit = static_cast<std::size_t>(limit);
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed view document: ") + e.what());
  }
}

json view_spec_to_json(const ViewSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  doc["where"] = predicate_to_json(spec.selection);
  if (!spec.derived.empty()) {
    json bins = json::array();
    for (const auto& b : spec.derived) {
      json cases = json::array();
      for (const auto& [bound, label] : b.cases) cases.push_back({{"lt", bound}, {"label", label}});
      bins.push_back({{"as", b.name}, {"column", b.column}, {"cases", cases}, {"else", b.else_label}});
    }
    doc["bins"] = bins;
  }
  if (!spec.group_by.empty()) doc["group_by"] = spec.group_by;
  if (!spec.aggregates.empty()) {
    json aggs = json::array();
    for (const auto& a : spec.aggregates) {
      json j = {{"fn", a.fn == AggregateFn::kCountStar ? "count" : "avg"}, {"as", a.alias}};
      if (a.fn == AggregateFn::kAvg) j["column"] = a.column;
      aggs.push_back(j);
    }
    doc["aggregates"] = aggs;
  }
  if (!spec.projection.empty()) doc["select"] = spec.projection;
  if (!spec.order_by.empty()) {
    json order = json::array();
    for (const auto& o : spec.order_by) order.push_back({{"column", o.column}, {"dir", o.descending ? "desc" : "asc"}});
    doc["order_by"] = order;
  }
  if (spec.limit) doc["limit"] = *spec.limit;
  return doc;
}

ViewSpec load_view_spec(const std::filesystem::path& path) {
  auto spec = view_spec_from_json(read_json_file(path));
  if (spec.name.empty()) spec.name = path.stem().string();
  return spec;
}

json view_result_to_json(const ViewResult& result) {
  json schema = json::array();
  for (const auto& c : result.schema) schema.push_back({{"name", c.name}, {"type", to_string(c.type)}});
  json rows = json::array();
  for (const auto& row : result.rows) {
    json r = json::array();
    for (const auto& v : row) r.push_back(value_to_json(v));
    rows.push_back(std::move(r));
  }
  return {{"schema", schema}, {"rows", rows}};
}

ViewResult view_result_from_json(const json& doc) {
  try {
    ViewResult result;
    for (const auto& c : doc.at("schema")) {
      result.schema.push_back({c.at("name").get<std::string>(),
                               attribute_type_from_string(c.at("type").get<std::string>())});
    }
    for (const auto& r : doc.at("rows")) {
      if (r.size() != result.schema.size()) throw ConfigError("view row arity does not match schema");
      std::vector<Value> row;
      for (std::size_t i = 0; i < r.size(); ++i) {
        Value v = value_from_json(r[i]);
        const bool ok = v.is_null() || (result.schema[i].type == AttributeType::kText ? v.is_text() : v.is_number());
        if (!ok) throw ConfigError("view cell does not match column type of '" + result.schema[i].name + "'");
        row.push_back(std::move(v));
      }
      result.rows.push_back(std::move(row));
    }
    return result;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed view result: ") + e.what());
  }
}

ViewResult load_view_result(const std::filesystem::path& path) {
  return view_result_from_json(read_json_file(path));
}

}  // namespace viewclean
