#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "viewclean/relation.hpp"

namespace viewclean {

enum class SimilarityFn { kLevenshtein, kJaccard, kJaccardContainment, kCosine, kNormEuclid };

std::string_view to_string(SimilarityFn fn);
SimilarityFn similarity_fn_from_string(std::string_view name);

// Lowercased, punctuation replaced by spaces, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

std::size_t edit_distance(std::string_view a, std::string_view b);

// Similarity in [0, 1], 1 meaning identical. Any null operand gives 0.
// `norm` is only used by kNormEuclid: 1 - |a - b| / norm.
double similarity(SimilarityFn fn, const Value& a, const Value& b, double norm = 1.0);

struct FeatureDef {
  std::string name;
  std::string column;
  SimilarityFn fn = SimilarityFn::kJaccard;
  bool learn = true;  // false: used for blocking only
};

using FeatureSpec = std::vector<FeatureDef>;

// Every unordered pair over `ids`.
PairSet build_pairs(const std::set<RecordId>& ids);

// Feature vectors keyed by pair; computed once per candidate set.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(FeatureSpec spec, std::map<PairKey, std::vector<double>> rows);

  const FeatureSpec& spec() const { return spec_; }
  const std::map<PairKey, std::vector<double>>& rows() const { return rows_; }
  bool contains(const PairKey& key) const { return rows_.contains(key); }
  const std::vector<double>& at(const PairKey& key) const;
  std::size_t feature_index(std::string_view name) const;

  // Only the features flagged for learning, in spec order.
  std::vector<double> learning_features(const PairKey& key) const;
  std::size_t learning_arity() const { return learn_idx_.size(); }

 private:
  FeatureSpec spec_;
  std::map<PairKey, std::vector<double>> rows_;
  std::vector<std::size_t> learn_idx_;
};

// norm_euclid features use, per column, the largest absolute value over the
// records that appear in `pairs`.
FeatureTable compute_features(const Relation& rel, const PairSet& pairs, const FeatureSpec& spec);

// Threshold predicates over named features, combined with all/any.
struct BlockingRule {
  enum class Kind { kAll, kAny, kMinSimilarity, kMaxDistance };
  Kind kind = Kind::kAll;
  std::string feature;
  double threshold = 0.0;
  std::vector<BlockingRule> children;

  static BlockingRule none() { return {}; }
  static BlockingRule at_least(std::string feature, double t) {
    return {Kind::kMinSimilarity, std::move(feature), t, {}};
  }
  static BlockingRule distance_at_most(std::string feature, double t) {
    return {Kind::kMaxDistance, std::move(feature), t, {}};
  }
  static BlockingRule all_of(std::vector<BlockingRule> c) { return {Kind::kAll, {}, 0.0, std::move(c)}; }
  static BlockingRule any_of(std::vector<BlockingRule> c) { return {Kind::kAny, {}, 0.0, std::move(c)}; }
};

bool passes(const BlockingRule& rule, const FeatureTable& features, const std::vector<double>& row);

// Keeps a pair iff the rule holds on its feature vector. Throws
// std::out_of_range when a pair has no feature vector.
PairSet apply_blocking(const PairSet& pairs, const FeatureTable& features, const BlockingRule& rule);

FeatureSpec feature_spec_from_json(const nlohmann::json& doc);
nlohmann::json feature_spec_to_json(const FeatureSpec& spec);
BlockingRule blocking_rule_from_json(const nlohmann::json& doc);
nlohmann::json blocking_rule_to_json(const BlockingRule& rule);

// Text cache: header line with feature names, then "id1 id2 f1 f2 ..." per
// pair. Values are written with 17 significant digits so reads are exact.
void write_feature_cache(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_cache(const std::filesystem::path& path, const FeatureSpec& spec);

}  // namespace viewclean
