#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewclean/pair_space.hpp"
#include "viewclean/relation.hpp"
#include "viewclean/view.hpp"

namespace viewclean {

struct ManifestColumn {
  std::string source;  // header name in the records file
  std::string name;    // column name inside the relation
  AttributeType type = AttributeType::kText;
};

// Describes one dataset on disk. Relative paths resolve against the
// manifest's directory.
struct DatasetManifest {
  std::string name;
  std::filesystem::path base_dir;
  std::filesystem::path records;
  std::filesystem::path ground_truth;
  CsvOptions csv;
  std::vector<ManifestColumn> columns;
  std::optional<std::string> id_column;  // ground truth refers to this column
  FeatureSpec features;
  BlockingRule blocking;
  std::vector<std::filesystem::path> views;
  std::optional<std::size_t> expected_rows;
  std::optional<std::size_t> expected_dup_pairs;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  // Files that must exist before the dataset can be loaded.
  std::vector<std::filesystem::path> required_files() const;
  std::vector<std::filesystem::path> missing_files() const;
};

DatasetManifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct Dataset {
  DatasetManifest manifest;
  Relation relation;
  GroundTruth truth;
  std::map<std::string, ViewSpec> views;
  // Non-fatal findings: row counts that differ from the manifest, views that
  // do not fit the schema and were skipped.
  std::vector<std::string> warnings;

  const ViewSpec& view(const std::string& name) const;
};

// Throws DataError naming every missing file.
Dataset load_dataset(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Synthetic restaurants-like data for runs without the licensed datasets.

struct SyntheticOptions {
  std::size_t n = 300;     // base entities
  double dup_rate = 0.15;  // ceil(n * dup_rate) of them get a noisy copy
  double noise = 0.1;      // per-token edit probability and relative numeric jitter
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Relation relation;
  GroundTruth truth;
};

// Columns: name, addr, city, cuisine, phone (text) and price (number).
// Copies keep city and cuisine; ids are a seeded shuffle of 0..N-1.
SyntheticData generate_synthetic(const SyntheticOptions& options);

FeatureSpec synthetic_features();
BlockingRule synthetic_blocking();
// Top 3 cuisines among SF restaurants by count.
ViewSpec synthetic_top3_view();

// Writes records.csv, matches.csv, top3.json and manifest.json into `dir`.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticData& data,
                                              const std::string& name = "synthetic");

}  // namespace viewclean
