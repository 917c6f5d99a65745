#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace viewclean {

// Raised for malformed configuration (schema/header mismatch, bad view or
// dataset documents). Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an input file is missing or unreadable. Maps to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AttributeType { kText, kNumber };

std::string_view to_string(AttributeType type);
AttributeType attribute_type_from_string(std::string_view name);

// A cell: text, number, or null.
class Value {
 public:
  Value() = default;
  static Value text(std::string s) { return Value(Storage(std::move(s))); }
  static Value number(double d) { return Value(Storage(d)); }
  static Value null() { return Value(); }

  bool is_null() const { return std::holds_alternative<std::monostate>(v_); }
  bool is_text() const { return std::holds_alternative<std::string>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }

  const std::string& as_text() const { return std::get<std::string>(v_); }
  double as_number() const { return std::get<double>(v_); }

  // Nulls sort first, then numbers, then text.
  std::strong_ordering operator<=>(const Value& other) const;
  bool operator==(const Value& other) const = default;

  std::string to_display() const;

 private:
  using Storage = std::variant<std::monostate, std::string, double>;
  explicit Value(Storage v) : v_(std::move(v)) {}
  Storage v_;
};

using RecordId = std::uint32_t;

struct Record {
  RecordId id = 0;
  std::vector<Value> values;
};

struct Column {
  std::string name;
  AttributeType type = AttributeType::kText;
  bool operator==(const Column&) const = default;
};

using Schema = std::vector<Column>;

// Immutable table with unique record ids. Record order is significant and
// preserved by every transformation.
class Relation {
 public:
  Relation() = default;
  Relation(Schema schema, std::vector<Record> records);

  const Schema& schema() const { return schema_; }
  std::span<const Record> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::optional<std::size_t> column_index(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;

  bool contains(RecordId id) const { return by_id_.contains(id); }
  const Record& record(RecordId id) const;

  // Relation without the given record; order of the rest is preserved.
  Relation without(RecordId id) const;
  Relation filter(const std::function<bool(const Record&)>& keep) const;

 private:
  Schema schema_;
  std::vector<Record> records_;
  std::unordered_map<RecordId, std::size_t> by_id_;
};

// Unordered pair of distinct record ids, stored smaller-first.
class PairKey {
 public:
  PairKey(RecordId a, RecordId b);
  RecordId first() const { return first_; }
  RecordId second() const { return second_; }
  bool contains(RecordId id) const { return id == first_ || id == second_; }
  RecordId other(RecordId id) const { return id == first_ ? second_ : first_; }
  auto operator<=>(const PairKey&) const = default;

 private:
  RecordId first_;
  RecordId second_;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{k.first()} << 32) | k.second());
  }
};

using PairSet = std::set<PairKey>;

struct GroundTruth {
  PairSet matches;
  bool is_match(const PairKey& key) const { return matches.contains(key); }
};

struct CsvOptions {
  char delimiter = ',';
};

// Parses delimiter-separated text with RFC-4180 style quoting. The first row
// is the header.
std::vector<std::vector<std::string>> read_delimited(const std::filesystem::path& path,
                                                     const CsvOptions& options = {});
std::vector<std::string> parse_delimited_line(std::string_view line, char delimiter);

// Loads the columns named in `schema` (in schema order). Ids are assigned
// sequentially from zero in file order; unparsable numbers become null, as
// do empty fields.
Relation load_relation(const std::filesystem::path& path, const Schema& schema,
                       const CsvOptions& options = {});

// Reads id pairs. When `id_column` names a column of the source file, the
// pairs refer to that column's values instead of internal ids.
GroundTruth load_ground_truth(const std::filesystem::path& path, const Relation& rel,
                              const CsvOptions& options = {});
GroundTruth load_ground_truth(const std::filesystem::path& path, const Relation& rel,
                              const std::unordered_map<std::string, RecordId>& external_ids,
                              const CsvOptions& options = {});

// Maps the values of `column` in the source file to record ids, for ground
// truth files keyed by an external identifier.
std::unordered_map<std::string, RecordId> load_external_ids(const std::filesystem::path& path,
                                                             std::string_view column,
                                                             const CsvOptions& options = {});

void write_relation(const std::filesystem::path& path, const Relation& rel,
                    const CsvOptions& options = {});
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);

// Connected components of the match graph over `dup_pairs`; each keeps only
// its smallest id. Order of surviving records is preserved.
Relation apply_dedup(const Relation& rel, const PairSet& dup_pairs);

// Ids dropped by apply_dedup, without materializing the relation.
std::set<RecordId> dropped_by_dedup(const PairSet& dup_pairs);

}  // namespace viewclean
