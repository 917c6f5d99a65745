#include "viewclean/relation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace viewclean {

std::string_view to_string(AttributeType type) {
  return type == AttributeType::kText ? "text" : "number";
}

AttributeType attribute_type_from_string(std::string_view name) {
  if (name == "text" || name == "string") return AttributeType::kText;
  if (name == "number" || name == "num") return AttributeType::kNumber;
  throw ConfigError("unknown attribute type '" + std::string(name) + "'");
}

std::strong_ordering Value::operator<=>(const Value& other) const {
  if (v_.index() != other.v_.index()) {
    // monostate(0) < string(1) would put text before numbers; reorder.
    static constexpr int kRank[] = {0, 2, 1};
    return kRank[v_.index()] <=> kRank[other.v_.index()];
  }
  if (is_null()) return std::strong_ordering::equal;
  if (is_text()) return as_text().compare(other.as_text()) <=> 0;
  const double a = as_number();
  const double b = other.as_number();
  if (a < b) return std::strong_ordering::less;
  if (a > b) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::string Value::to_display() const {
  if (is_null()) return "";
  if (is_text()) return as_text();
  std::ostringstream os;
  os.precision(15);
  os << as_number();
  return os.str();
}

Relation::Relation(Schema schema, std::vector<Record> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  std::set<std::string> names;
  for (const auto& c : schema_) {
    if (!names.insert(c.name).second) throw ConfigError("duplicate column name '" + c.name + "'");
  }
  by_id_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.values.size() != schema_.size()) {
      throw ConfigError("record " + std::to_string(r.id) + " has arity " +
                        std::to_string(r.values.size()) + ", schema has " +
                        std::to_string(schema_.size()));
    }
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      const auto& v = r.values[c];
      if (v.is_null()) continue;
      const bool ok = schema_[c].type == AttributeType::kText ? v.is_text() : v.is_number();
      if (!ok) throw ConfigError("record " + std::to_string(r.id) + " violates type of column '" +
                                 schema_[c].name + "'");
    }
    if (!by_id_.emplace(r.id, i).second) {
      throw ConfigError("duplicate record id " + std::to_string(r.id));
    }
  }
}

std::optional<std::size_t> Relation::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Relation::require_column(std::string_view name) const {
  auto idx = column_index(name);
  if (!idx) throw ConfigError("unknown column '" + std::string(name) + "'");
  return *idx;
}

const Record& Relation::record(RecordId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::out_of_range("unknown record id " + std::to_string(id));
  return records_[it->second];
}

Relation Relation::without(RecordId id) const {
  return filter([id](const Record& r) { return r.id != id; });
}

Relation Relation::filter(const std::function<bool(const Record&)>& keep) const {
  std::vector<Record> kept;
  kept.reserve(records_.size());
  for (const auto& r : records_) {
    if (keep(r)) kept.push_back(r);
  }
  return Relation(schema_, std::move(kept));
}

PairKey::PairKey(RecordId a, RecordId b) : first_(std::min(a, b)), second_(std::max(a, b)) {
  if (a == b) throw std::invalid_argument("pair of identical ids " + std::to_string(a));
}

std::vector<std::string> parse_delimited_line(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

namespace {

bool has_open_quote(std::string_view text) {
  return std::count(text.begin(), text.end(), '"') % 2 == 1;
}

std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '$') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(out)) return std::nullopt;
  return out;
}

std::string quote_field(const std::string& s, char delimiter) {
  if (s.find_first_of(std::string{delimiter, '"', '\n'}) == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> read_delimited(const std::filesystem::path& path,
                                                     const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::string pending;
  while (std::getline(in, line)) {
    if (!pending.empty()) {
      pending += '\n';
      pending += line;
    } else {
      pending = line;
    }
    if (has_open_quote(pending)) continue;
    if (rows.empty() && pending.size() >= 3 && pending.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      pending.erase(0, 3);
    }
    if (!pending.empty() && pending != "\r") {
      rows.push_back(parse_delimited_line(pending, options.delimiter));
    }
    pending.clear();
  }
  if (!pending.empty()) rows.push_back(parse_delimited_line(pending, options.delimiter));
  return rows;
}

Relation load_relation(const std::filesystem::path& path, const Schema& schema,
                       const CsvOptions& options) {
  auto rows = read_delimited(path, options);
  if (rows.empty()) throw ConfigError("'" + path.string() + "' has no header row");
  const auto& header = rows.front();
  std::vector<std::size_t> source;
  for (const auto& col : schema) {
    auto it = std::find(header.begin(), header.end(), col.name);
    if (it == header.end()) {
      throw ConfigError("column '" + col.name + "' not in header of '" + path.string() + "'");
    }
    source.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<Record> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    Record rec;
    rec.id = static_cast<RecordId>(r - 1);
    rec.values.reserve(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string empty;
      const std::string& raw = source[c] < rows[r].size() ? rows[r][source[c]] : empty;
      if (schema[c].type == AttributeType::kNumber) {
        auto num = parse_number(raw);
        rec.values.push_back(num ? Value::number(*num) : Value::null());
      } else {
        rec.values.push_back(raw.empty() ? Value::null() : Value::text(raw));
      }
    }
    records.push_back(std::move(rec));
  }
  return Relation(schema, std::move(records));
}

std::unordered_map<std::string, RecordId> load_external_ids(const std::filesystem::path& path,
                                                             std::string_view column,
                                                             const CsvOptions& options) {
  auto rows = read_delimited(path, options);
  if (rows.empty()) throw ConfigError("'" + path.string() + "' has no header row");
  auto it = std::find(rows[0].begin(), rows[0].end(), column);
  if (it == rows[0].end()) {
    throw ConfigError("id column '" + std::string(column) + "' not in '" + path.string() + "'");
  }
  const auto idx = static_cast<std::size_t>(it - rows[0].begin());
  std::unordered_map<std::string, RecordId> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (idx < rows[r].size()) ids.emplace(rows[r][idx], static_cast<RecordId>(r - 1));
  }
  return ids;
}

namespace {

GroundTruth load_ground_truth_impl(
    const std::filesystem::path& path, const Relation& rel,
    const std::function<std::optional<RecordId>(const std::string&)>& resolve,
    const CsvOptions& options) {
  GroundTruth truth;
  auto rows = read_delimited(path, options);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 2) continue;
    auto a = resolve(row[0]);
    auto b = resolve(row[1]);
    if (!a || !b) {
      if (r == 0) continue;  // header
      throw DataError("'" + path.string() + "' line " + std::to_string(r + 1) +
                      ": unknown id in pair (" + row[0] + ", " + row[1] + ")");
    }
    if (!rel.contains(*a) || !rel.contains(*b)) {
      throw DataError("'" + path.string() + "' line " + std::to_string(r + 1) +
                      ": id not in relation");
    }
    if (*a == *b) continue;
    truth.matches.emplace(*a, *b);
  }
  return truth;
}

}  // namespace

GroundTruth load_ground_truth(const std::filesystem::path& path, const Relation& rel,
                              const CsvOptions& options) {
  return load_ground_truth_impl(
      path, rel,
      [](const std::string& s) -> std::optional<RecordId> {
        auto num = parse_number(s);
        if (!num || *num < 0 || std::floor(*num) != *num) return std::nullopt;
        return static_cast<RecordId>(*num);
      },
      options);
}

GroundTruth load_ground_truth(const std::filesystem::path& path, const Relation& rel,
                              const std::unordered_map<std::string, RecordId>& external_ids,
                              const CsvOptions& options) {
  return load_ground_truth_impl(
      path, rel,
      [&](const std::string& s) -> std::optional<RecordId> {
        auto it = external_ids.find(s);
        if (it == external_ids.end()) return std::nullopt;
        return it->second;
      },
      options);
}

void write_relation(const std::filesystem::path& path, const Relation& rel,
                    const CsvOptions& options) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const char d = options.delimiter;
  for (std::size_t c = 0; c < rel.schema().size(); ++c) {
    if (c) out << d;
    out << quote_field(rel.schema()[c].name, d);
  }
  out << '\n';
  for (const auto& r : rel.records()) {
    for (std::size_t c = 0; c < r.values.size(); ++c) {
      if (c) out << d;
      out << quote_field(r.values[c].to_display(), d);
    }
    out << '\n';
  }
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "id1,id2\n";
  for (const auto& p : truth.matches) out << p.first() << ',' << p.second() << '\n';
}

std::set<RecordId> dropped_by_dedup(const PairSet& dup_pairs) {
  // Union-find over the ids touched by the pairs; the root is always the
  // smallest id of its component.
  std::map<RecordId, RecordId> parent;
  std::function<RecordId(RecordId)> find = [&](RecordId x) {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent.emplace(x, x);
      return x;
    }
    if (it->second == x) return x;
    RecordId root = find(it->second);
    parent[x] = root;
    return root;
  };
  for (const auto& p : dup_pairs) {
    RecordId a = find(p.first());
    RecordId b = find(p.second());
    if (a == b) continue;
    if (a < b) {
      parent[b] = a;
    } else {
      parent[a] = b;
    }
  }
  std::set<RecordId> dropped;
  for (const auto& [id, _] : parent) {
    if (find(id) != id) dropped.insert(id);
  }
  return dropped;
}

Relation apply_dedup(const Relation& rel, const PairSet& dup_pairs) {
  if (dup_pairs.empty()) return rel;
  const auto dropped = dropped_by_dedup(dup_pairs);
  return rel.filter([&](const Record& r) { return !dropped.contains(r.id); });
}

}  // namespace viewclean
