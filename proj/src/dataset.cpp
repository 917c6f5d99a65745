#include "viewclean/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "viewclean/sampling.hpp"

namespace viewclean {

using nlohmann::json;

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::filesystem::path> DatasetManifest::required_files() const {
  std::vector<std::filesystem::path> out = {resolve(records), resolve(ground_truth)};
  for (const auto& v : views) out.push_back(resolve(v));
  return out;
}

std::vector<std::filesystem::path> DatasetManifest::missing_files() const {
  std::vector<std::filesystem::path> out;
  for (const auto& p : required_files()) {
    if (!std::filesystem::exists(p)) out.push_back(p);
  }
  return out;
}

DatasetManifest manifest_from_json(const json& doc, const std::filesystem::path& base_dir) {
  try {
    DatasetManifest m;
    m.base_dir = base_dir;
    m.name = doc.at("name").get<std::string>();
    m.records = doc.at("records").get<std::string>();
    m.ground_truth = doc.at("ground_truth").get<std::string>();
    const auto delim = doc.value("delimiter", std::string(","));
    if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
    m.csv.delimiter = delim[0];
    for (const auto& c : doc.at("schema")) {
      ManifestColumn col;
      col.source = c.at("name").get<std::string>();
      col.name = c.value("as", col.source);
      col.type = attribute_type_from_string(c.value("type", std::string("text")));
      m.columns.push_back(std::move(col));
    }
    if (doc.contains("id_column")) m.id_column = doc["id_column"].get<std::string>();
    m.features = feature_spec_from_json(doc.at("features"));
    m.blocking = doc.contains("blocking") ? blocking_rule_from_json(doc["blocking"]) : BlockingRule::none();
    for (const auto& v : doc.value("views", json::array())) m.views.emplace_back(v.get<std::string>());
    if (doc.contains("expected")) {
      const auto& e = doc["expected"];
      if (e.contains("rows")) m.expected_rows = e["rows"].get<std::size_t>();
      if (e.contains("dup_pairs")) m.expected_dup_pairs = e["dup_pairs"].get<std::size_t>();
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed dataset manifest: ") + e.what());
  }
}

json manifest_to_json(const DatasetManifest& m) {
  json schema = json::array();
  for (const auto& c : m.columns) {
    json col = {{"name", c.source}, {"type", to_string(c.type)}};
    if (c.name != c.source) col["as"] = c.name;
    schema.push_back(col);
  }
  json views = json::array();
  for (const auto& v : m.views) views.push_back(v.generic_string());
  json doc = {{"name", m.name},
              {"records", m.records.generic_string()},
              {"ground_truth", m.ground_truth.generic_string()},
              {"delimiter", std::string(1, m.csv.delimiter)},
              {"schema", schema},
              {"features", feature_spec_to_json(m.features)},
              {"blocking", blocking_rule_to_json(m.blocking)},
              {"views", views}};
  if (m.id_column) doc["id_column"] = *m.id_column;
  if (m.expected_rows || m.expected_dup_pairs) {
    json e = json::object();
    if (m.expected_rows) e["rows"] = *m.expected_rows;
    if (m.expected_dup_pairs) e["dup_pairs"] = *m.expected_dup_pairs;
    doc["expected"] = e;
  }
  return doc;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset manifest '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
  return manifest_from_json(doc, path.parent_path());
}

const ViewSpec& Dataset::view(const std::string& name) const {
  auto it = views.find(name);
  if (it == views.end()) {
    std::string known;
    for (const auto& [n, _] : views) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("dataset '" + manifest.name + "' has no view '" + name + "' (available: " + known + ")");
  }
  return it->second;
}

Dataset load_dataset(const DatasetManifest& manifest) {
  const auto missing = manifest.missing_files();
  if (!missing.empty()) {
    std::string msg = "dataset '" + manifest.name + "' is incomplete; expected files:";
    for (const auto& p : missing) msg += "\n  " + p.string();
    throw DataError(msg);
  }
  Dataset ds;
  ds.manifest = manifest;

  Schema source;
  Schema renamed;
  for (const auto& c : manifest.columns) {
    source.push_back({c.source, c.type});
    renamed.push_back({c.name, c.type});
  }
  Relation loaded = load_relation(manifest.resolve(manifest.records), source, manifest.csv);
  std::vector<Record> records(loaded.records().begin(), loaded.records().end());
  ds.relation = Relation(renamed, std::move(records));

  if (manifest.id_column) {
    auto ids = load_external_ids(manifest.resolve(manifest.records), *manifest.id_column, manifest.csv);
    ds.truth = load_ground_truth(manifest.resolve(manifest.ground_truth), ds.relation, ids, manifest.csv);
  } else {
    ds.truth = load_ground_truth(manifest.resolve(manifest.ground_truth), ds.relation, manifest.csv);
  }

  if (manifest.expected_rows && *manifest.expected_rows != ds.relation.size()) {
    ds.warnings.push_back("expected " + std::to_string(*manifest.expected_rows) + " rows, found " +
                          std::to_string(ds.relation.size()));
  }
  if (manifest.expected_dup_pairs && *manifest.expected_dup_pairs != ds.truth.matches.size()) {
    ds.warnings.push_back("expected " + std::to_string(*manifest.expected_dup_pairs) + " duplicate pairs, found " +
                          std::to_string(ds.truth.matches.size()));
  }
  for (const auto& path : manifest.views) {
    ViewSpec spec = load_view_spec(manifest.resolve(path));
    try {
      validate(spec, ds.relation.schema());
    } catch (const EvaluationError& e) {
      ds.warnings.push_back("view '" + spec.name + "' skipped: " + e.what());
      continue;
    }
    ds.views.emplace(spec.name, std::move(spec));
  }
  return ds;
}

// ---------------------------------------------------------------------------

namespace {

const char* kOnsets[] = {"b", "k", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"};
const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
const char* kSuffixes[] = {"Grill", "Cafe", "Kitchen", "Bistro", "House", "Diner",
                           "Tavern", "Bar", "Garden", "Eatery", "Table", "Place"};
const char* kStreetTypes[] = {"St", "Ave", "Blvd", "Rd"};
const char* kOtherCities[] = {"LA", "NY", "Chicago"};
const char* kCuisines[] = {"American", "French", "Asian", "Italian", "Mexican", "Thai", "Indian", "Greek"};
const double kCuisineWeights[] = {0.28, 0.2, 0.16, 0.1, 0.08, 0.07, 0.06, 0.05};

template <std::size_t N>
const char* pick(Rng& rng, const char* (&options)[N]) {
  return options[rng.below(N)];
}

std::string word(Rng& rng) {
  std::string w;
  const std::size_t syllables = 2 + rng.below(2);
  for (std::size_t i = 0; i < syllables; ++i) {
    w += pick(rng, kOnsets);
    w += pick(rng, kVowels);
  }
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::string digits(Rng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('0' + rng.below(10));
  return s;
}

std::string edit(std::string token, Rng& rng) {
  const bool numeric = std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); });
  auto random_char = [&] {
    return numeric ? static_cast<char>('0' + rng.below(10)) : static_cast<char>('a' + rng.below(26));
  };
  const std::size_t pos = rng.below(token.size());
  switch (rng.below(4)) {
    case 0:
      token[pos] = random_char();
      break;
    case 1:
      if (token.size() > 1) {
        token.erase(pos, 1);
        break;
      }
      [[fallthrough]];
    case 2:
      token.insert(token.begin() + static_cast<std::ptrdiff_t>(pos), random_char());
      break;
    default:
      if (pos + 1 < token.size()) {
        std::swap(token[pos], token[pos + 1]);
      } else {
        token += random_char();
      }
      break;
  }
  return token;
}

// Each whitespace or dash separated token is edited with probability `noise`.
std::string perturb(const std::string& text, double noise, Rng& rng) {
  std::string out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) out += rng.uniform() < noise ? edit(token, rng) : token;
    token.clear();
  };
  for (char c : text) {
    if (c == ' ' || c == '-') {
      flush();
      out += c;
    } else {
      token += c;
    }
  }
  flush();
  return out;
}

double round_cents(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

SyntheticData generate_synthetic(const SyntheticOptions& options) {
  if (!(options.dup_rate > 0.0 && options.dup_rate < 1.0)) throw ConfigError("dup_rate must lie in (0, 1)");
  if (!(options.noise >= 0.0 && options.noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
  if (options.n < 2) throw ConfigError("synthetic data needs at least 2 base records");
  Rng rng(derive_seed(options.seed, {0x5717}));

  struct Entity {
    std::string name, addr, city, cuisine, phone;
    double price;
  };
  std::vector<Entity> base;
  for (std::size_t i = 0; i < options.n; ++i) {
    Entity e;
    e.name = word(rng) + (rng.below(3) == 0 ? " " + word(rng) : "") + " " + pick(rng, kSuffixes);
    e.addr = std::to_string(1 + rng.below(2999)) + " " + word(rng) + " " + pick(rng, kStreetTypes);
    e.city = rng.below(2) == 0 ? "SF" : pick(rng, kOtherCities);
    e.cuisine = kCuisines[weighted_sample(kCuisineWeights, 1, rng)[0]];
    e.phone = digits(rng, 3) + "-" + digits(rng, 3) + "-" + digits(rng, 4);
    e.price = round_cents(8.0 + 72.0 * rng.uniform());
    base.push_back(std::move(e));
  }

  const auto copies = static_cast<std::size_t>(std::ceil(static_cast<double>(options.n) * options.dup_rate));
  std::vector<std::size_t> origin(options.n);
  for (std::size_t i = 0; i < options.n; ++i) origin[i] = i;
  std::vector<Entity> all = base;
  for (auto src : uniform_sample(options.n, copies, rng)) {
    Entity e = base[src];
    e.name = perturb(e.name, options.noise, rng);
    e.addr = perturb(e.addr, options.noise, rng);
    e.phone = perturb(e.phone, options.noise, rng);
    e.price = round_cents(e.price * (1.0 + options.noise * (2.0 * rng.uniform() - 1.0)));
    all.push_back(std::move(e));
    origin.push_back(src);
  }

  // position p in the output holds entry order[p]
  const auto order = uniform_sample(all.size(), all.size(), rng);
  std::vector<RecordId> id_of(all.size());
  std::vector<Record> records;
  for (std::size_t p = 0; p < order.size(); ++p) {
    const Entity& e = all[order[p]];
    id_of[order[p]] = static_cast<RecordId>(p);
    records.push_back({static_cast<RecordId>(p),
                       {Value::text(e.name), Value::text(e.addr), Value::text(e.city), Value::text(e.cuisine),
                        Value::text(e.phone), Value::number(e.price)}});
  }
  SyntheticData out;
  out.relation = Relation({{"name", AttributeType::kText},
                           {"addr", AttributeType::kText},
                           {"city", AttributeType::kText},
                           {"cuisine", AttributeType::kText},
                           {"phone", AttributeType::kText},
                           {"price", AttributeType::kNumber}},
                          std::move(records));
  for (std::size_t i = options.n; i < all.size(); ++i) out.truth.matches.emplace(id_of[i], id_of[origin[i]]);
  return out;
}

FeatureSpec synthetic_features() {
  return {{"name_jaccard", "name", SimilarityFn::kJaccard, true},
          {"name_lev", "name", SimilarityFn::kLevenshtein, true},
          {"addr_containment", "addr", SimilarityFn::kJaccardContainment, true},
          {"phone_lev", "phone", SimilarityFn::kLevenshtein, true},
          {"price", "price", SimilarityFn::kNormEuclid, true}};
}

BlockingRule synthetic_blocking() {
  return BlockingRule::all_of(
      {BlockingRule::at_least("name_jaccard", 0.2), BlockingRule::at_least("addr_containment", 0.2)});
}

ViewSpec synthetic_top3_view() {
  ViewSpec spec;
  spec.name = "Top3";
  spec.selection = Predicate::equals("city", Value::text("SF"));
  spec.group_by = {"cuisine"};
  spec.aggregates = {{AggregateFn::kCountStar, "", "count"}};
  spec.order_by = {{"count", true}};
  spec.limit = 3;
  return spec;
}

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticData& data,
                                              const std::string& name) {
  std::filesystem::create_directories(dir);
  write_relation(dir / "records.csv", data.relation);
  write_ground_truth(dir / "matches.csv", data.truth);
  {
    std::ofstream out(dir / "top3.json");
    if (!out) throw DataError("cannot write '" + (dir / "top3.json").string() + "'");
    out << view_spec_to_json(synthetic_top3_view()).dump(2) << '\n';
  }
  DatasetManifest m;
  m.name = name;
  m.records = "records.csv";
  m.ground_truth = "matches.csv";
  for (const auto& c : data.relation.schema()) m.columns.push_back({c.name, c.name, c.type});
  m.features = synthetic_features();
  m.blocking = synthetic_blocking();
  m.views = {"top3.json"};
  m.expected_rows = data.relation.size();
  m.expected_dup_pairs = data.truth.matches.size();
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << manifest_to_json(m).dump(2) << '\n';
  return path;
}

}  // namespace viewclean
