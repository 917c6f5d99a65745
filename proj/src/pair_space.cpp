#include "viewclean/pair_space.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace viewclean {

std::string_view to_string(SimilarityFn fn) {
  switch (fn) {
    case SimilarityFn::kLevenshtein:
      return "levenshtein_norm";
    case SimilarityFn::kJaccard:
      return "jaccard";
    case SimilarityFn::kJaccardContainment:
      return "jaccard_containment";
    case SimilarityFn::kCosine:
      return "cosine";
    case SimilarityFn::kNormEuclid:
      return "norm_euclid";
  }
  return "?";
}

SimilarityFn similarity_fn_from_string(std::string_view name) {
  for (auto fn : {SimilarityFn::kLevenshtein, SimilarityFn::kJaccard, SimilarityFn::kJaccardContainment,
                  SimilarityFn::kCosine, SimilarityFn::kNormEuclid}) {
    if (to_string(fn) == name) return fn;
  }
  throw ConfigError("unknown similarity function '" + std::string(name) + "'");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> token_set(std::string_view text) {
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

std::size_t intersection_size(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t count = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

double cosine(std::string_view a, std::string_view b) {
  std::map<std::string, double> ca;
  std::map<std::string, double> cb;
  for (auto& t : tokenize(a)) ca[t] += 1.0;
  for (auto& t : tokenize(b)) cb[t] += 1.0;
  if (ca.empty() || cb.empty()) return ca.empty() && cb.empty() ? 1.0 : 0.0;
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [t, x] : ca) {
    na += x * x;
    if (auto it = cb.find(t); it != cb.end()) dot += x * it->second;
  }
  for (const auto& [t, y] : cb) nb += y * y;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

}  // namespace

double similarity(SimilarityFn fn, const Value& a, const Value& b, double norm) {
  if (a.is_null() || b.is_null()) return 0.0;
  if (fn == SimilarityFn::kNormEuclid) {
    if (!a.is_number() || !b.is_number()) throw ConfigError("norm_euclid needs numeric values");
    if (norm <= 0.0) return 1.0;
    return std::clamp(1.0 - std::abs(a.as_number() - b.as_number()) / norm, 0.0, 1.0);
  }
  if (!a.is_text() || !b.is_text()) throw ConfigError(std::string(to_string(fn)) + " needs text values");
  const auto& x = a.as_text();
  const auto& y = b.as_text();
  switch (fn) {
    case SimilarityFn::kLevenshtein: {
      const auto lx = lower(x);
      const auto ly = lower(y);
      const std::size_t longest = std::max(lx.size(), ly.size());
      if (longest == 0) return 1.0;
      return 1.0 - static_cast<double>(edit_distance(lx, ly)) / static_cast<double>(longest);
    }
    case SimilarityFn::kJaccard: {
      const auto sa = token_set(x);
      const auto sb = token_set(y);
      if (sa.empty() && sb.empty()) return 1.0;
      const auto inter = intersection_size(sa, sb);
      return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
    }
    case SimilarityFn::kJaccardContainment: {
      const auto sa = token_set(x);
      const auto sb = token_set(y);
      if (sa.empty() || sb.empty()) return sa.empty() && sb.empty() ? 1.0 : 0.0;
      return static_cast<double>(intersection_size(sa, sb)) /
             static_cast<double>(std::min(sa.size(), sb.size()));
    }
    case SimilarityFn::kCosine:
      return cosine(x, y);
    case SimilarityFn::kNormEuclid:
      break;
  }
  return 0.0;
}

PairSet build_pairs(const std::set<RecordId>& ids) {
  PairSet pairs;
  const std::vector<RecordId> v(ids.begin(), ids.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) pairs.emplace_hint(pairs.end(), v[i], v[j]);
  }
  return pairs;
}

FeatureTable::FeatureTable(FeatureSpec spec, std::map<PairKey, std::vector<double>> rows)
    : spec_(std::move(spec)), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    if (spec_[i].learn) learn_idx_.push_back(i);
  }
  for (const auto& [key, row] : rows_) {
    if (row.size() != spec_.size()) throw ConfigError("feature row arity does not match spec");
  }
}

const std::vector<double>& FeatureTable::at(const PairKey& key) const {
  auto it = rows_.find(key);
  if (it == rows_.end()) {
    throw std::out_of_range("no feature vector for pair (" + std::to_string(key.first()) + ", " +
                            std::to_string(key.second()) + ")");
  }
  return it->second;
}

std::size_t FeatureTable::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    if (spec_[i].name == name) return i;
  }
  throw ConfigError("unknown feature '" + std::string(name) + "'");
}

std::vector<double> FeatureTable::learning_features(const PairKey& key) const {
  const auto& row = at(key);
  std::vector<double> out;
  out.reserve(learn_idx_.size());
  for (auto i : learn_idx_) out.push_back(row[i]);
  return out;
}

FeatureTable compute_features(const Relation& rel, const PairSet& pairs, const FeatureSpec& spec) {
  std::vector<std::size_t> cols;
  std::vector<double> norms(spec.size(), 0.0);
  std::set<RecordId> touched;
  for (const auto& p : pairs) {
    touched.insert(p.first());
    touched.insert(p.second());
  }
  for (std::size_t f = 0; f < spec.size(); ++f) {
    const auto col = rel.require_column(spec[f].column);
    const auto type = rel.schema()[col].type;
    const bool numeric = spec[f].fn == SimilarityFn::kNormEuclid;
    if (numeric != (type == AttributeType::kNumber)) {
      throw ConfigError("feature '" + spec[f].name + "' does not fit the type of column '" +
                        spec[f].column + "'");
    }
    cols.push_back(col);
    if (numeric) {
      for (auto id : touched) {
        const auto& v = rel.record(id).values[col];
        if (v.is_number()) norms[f] = std::max(norms[f], std::abs(v.as_number()));
      }
    }
  }
  std::map<PairKey, std::vector<double>> rows;
  for (const auto& p : pairs) {
    const auto& a = rel.record(p.first()).values;
    const auto& b = rel.record(p.second()).values;
    std::vector<double> row(spec.size());
    for (std::size_t f = 0; f < spec.size(); ++f) {
      row[f] = similarity(spec[f].fn, a[cols[f]], b[cols[f]], norms[f]);
    }
    rows.emplace_hint(rows.end(), p, std::move(row));
  }
  return FeatureTable(spec, std::move(rows));
}

bool passes(const BlockingRule& rule, const FeatureTable& features, const std::vector<double>& row) {
  using K = BlockingRule::Kind;
  switch (rule.kind) {
    case K::kAll:
      return std::all_of(rule.children.begin(), rule.children.end(),
                         [&](const BlockingRule& c) { return passes(c, features, row); });
    case K::kAny:
      return std::any_of(rule.children.begin(), rule.children.end(),
                         [&](const BlockingRule& c) { return passes(c, features, row); });
    case K::kMinSimilarity:
      return row[features.feature_index(rule.feature)] >= rule.threshold;
    case K::kMaxDistance:
      return 1.0 - row[features.feature_index(rule.feature)] <= rule.threshold;
  }
  return false;
}

PairSet apply_blocking(const PairSet& pairs, const FeatureTable& features, const BlockingRule& rule) {
  PairSet kept;
  for (const auto& p : pairs) {
    if (passes(rule, features, features.at(p))) kept.emplace_hint(kept.end(), p);
  }
  return kept;
}

// ---------------------------------------------------------------------------

FeatureSpec feature_spec_from_json(const nlohmann::json& doc) {
  try {
    FeatureSpec spec;
    for (const auto& f : doc) {
      FeatureDef def;
      def.column = f.at("column").get<std::string>();
      def.fn = similarity_fn_from_string(f.at("function").get<std::string>());
      def.name = f.value("name", def.column + "_" + std::string(to_string(def.fn)));
      def.learn = f.value("learn", true);
      spec.push_back(std::move(def));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed feature list: ") + e.what());
  }
}

nlohmann::json feature_spec_to_json(const FeatureSpec& spec) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : spec) {
    out.push_back({{"name", f.name}, {"column", f.column}, {"function", to_string(f.fn)}, {"learn", f.learn}});
  }
  return out;
}

BlockingRule blocking_rule_from_json(const nlohmann::json& doc) {
  try {
    if (doc.is_null()) return BlockingRule::none();
    if (doc.contains("all") || doc.contains("any")) {
      const bool all = doc.contains("all");
      std::vector<BlockingRule> children;
      for (const auto& c : doc.at(all ? "all" : "any")) children.push_back(blocking_rule_from_json(c));
      return all ? BlockingRule::all_of(std::move(children)) : BlockingRule::any_of(std::move(children));
    }
    const auto feature = doc.at("feature").get<std::string>();
    if (doc.contains("min")) return BlockingRule::at_least(feature, doc["min"].get<double>());
    if (doc.contains("max_distance")) {
      return BlockingRule::distance_at_most(feature, doc["max_distance"].get<double>());
    }
    throw ConfigError("blocking predicate needs 'min' or 'max_distance': " + doc.dump());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed blocking rule: ") + e.what());
  }
}

nlohmann::json blocking_rule_to_json(const BlockingRule& rule) {
  using K = BlockingRule::Kind;
  switch (rule.kind) {
    case K::kAll:
    case K::kAny: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : rule.children) arr.push_back(blocking_rule_to_json(c));
      return {{rule.kind == K::kAll ? "all" : "any", arr}};
    }
    case K::kMinSimilarity:
      return {{"feature", rule.feature}, {"min", rule.threshold}};
    case K::kMaxDistance:
      return {{"feature", rule.feature}, {"max_distance", rule.threshold}};
  }
  return nullptr;
}

void write_feature_cache(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "id1 id2";
  for (const auto& f : table.spec()) out << ' ' << f.name;
  out << '\n';
  out.precision(17);
  for (const auto& [key, row] : table.rows()) {
    out << key.first() << ' ' << key.second();
    for (double v : row) out << ' ' << v;
    out << '\n';
  }
}

FeatureTable read_feature_cache(const std::filesystem::path& path, const FeatureSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty feature cache '" + path.string() + "'");
  {
    std::istringstream header(line);
    std::string a;
    std::string b;
    header >> a >> b;
    std::vector<std::string> names;
    for (std::string name; header >> name;) names.push_back(name);
    if (names.size() != spec.size()) throw ConfigError("feature cache does not match the feature spec");
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] != spec[i].name) throw ConfigError("feature cache column '" + names[i] + "' unexpected");
    }
  }
  std::map<PairKey, std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    RecordId a = 0;
    RecordId b = 0;
    if (!(is >> a >> b)) throw ConfigError("bad feature cache line: " + line);
    std::vector<double> row(spec.size());
    for (auto& v : row) {
      if (!(is >> v)) throw ConfigError("bad feature cache line: " + line);
    }
    rows.emplace(PairKey(a, b), std::move(row));
  }
  return FeatureTable(spec, std::move(rows));
}

}  // namespace viewclean
