#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "viewclean/experiment.hpp"
#include "viewclean/view_distance.hpp"

using namespace viewclean;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("viewclean_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.targets = {{"Top3", {"Top3"}, Aggregation::kMax}};
  cfg.strategies = {Strategy::kViewImpact, Strategy::kUncertainty};
  cfg.repetitions = 3;
  cfg.budgets = {93};
  return cfg;
}

const ExperimentInput& synthetic() {
  static const ExperimentInput input = synthetic_input({});
  return input;
}

}  // namespace

TEST_CASE("noise-free synthetic copies are exact") {
  auto data = generate_synthetic({200, 0.15, 0.0, 7});
  CHECK(data.truth.matches.size() == 30);
  CHECK(data.relation.size() == 230);
  const auto features = synthetic_features();
  PairSet pairs(data.truth.matches.begin(), data.truth.matches.end());
  auto table = compute_features(data.relation, pairs, features);
  for (const auto& p : data.truth.matches) {
    for (double v : table.at(p)) CHECK(v == 1.0);
    const auto& a = data.relation.record(p.first());
    const auto& b = data.relation.record(p.second());
    CHECK(a.values == b.values);
  }
}

TEST_CASE("synthetic generation is seeded") {
  auto a = generate_synthetic({120, 0.2, 0.1, 3});
  auto b = generate_synthetic({120, 0.2, 0.1, 3});
  auto c = generate_synthetic({120, 0.2, 0.1, 4});
  CHECK(a.truth.matches == b.truth.matches);
  REQUIRE(a.relation.size() == b.relation.size());
  for (std::size_t i = 0; i < a.relation.size(); ++i) {
    CHECK(a.relation.records()[i].values == b.relation.records()[i].values);
  }
  CHECK(a.relation.records()[0].values != c.relation.records()[0].values);
  CHECK(a.truth.matches.size() == 24);

  CHECK_THROWS_AS(generate_synthetic({100, 0.0, 0.1, 1}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic({100, 1.0, 0.1, 1}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic({100, 0.1, -0.1, 1}), ConfigError);
}

TEST_CASE("synthetic copies keep city and cuisine and stay close") {
  auto data = generate_synthetic({});
  const auto city = data.relation.require_column("city");
  const auto cuisine = data.relation.require_column("cuisine");
  const auto price = data.relation.require_column("price");
  for (const auto& p : data.truth.matches) {
    const auto& a = data.relation.record(p.first());
    const auto& b = data.relation.record(p.second());
    CHECK(a.values[city] == b.values[city]);
    CHECK(a.values[cuisine] == b.values[cuisine]);
    const double pa = a.values[price].as_number();
    const double pb = b.values[price].as_number();
    CHECK(std::abs(pa - pb) <= 0.1 * std::max(pa, pb) + 0.01);
  }
}

TEST_CASE("synthetic dataset round trips through its manifest") {
  const auto dir = scratch("synth");
  auto data = generate_synthetic({80, 0.2, 0.1, 5});
  const auto manifest_path = write_synthetic_dataset(dir, data, "tiny");
  auto ds = load_dataset(load_manifest(manifest_path));
  CHECK(ds.manifest.name == "tiny");
  CHECK(ds.warnings.empty());
  CHECK(ds.relation.size() == data.relation.size());
  CHECK(ds.truth.matches == data.truth.matches);
  REQUIRE(ds.views.contains("Top3"));
  CHECK(evaluate(ds.view("Top3"), ds.relation).rows == evaluate(synthetic_top3_view(), data.relation).rows);
  CHECK_THROWS_AS(ds.view("Nope"), ConfigError);
  auto again = manifest_from_json(manifest_to_json(ds.manifest), dir);
  CHECK(again.required_files() == ds.manifest.required_files());
}

TEST_CASE("missing dataset files are listed") {
  const auto dir = scratch("missing");
  auto m = load_manifest(fs::path(VIEWCLEAN_SOURCE_DIR) / "data/datasets/restaurants.json");
  m.base_dir = dir;
  const auto missing = m.missing_files();
  CHECK(missing.size() == 2 + m.views.size());
  try {
    load_dataset(m);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("records.csv") != std::string::npos);
    CHECK(msg.find("matches.csv") != std::string::npos);
  }
}

TEST_CASE("shipped manifests and views fit their schemas") {
  for (const char* name : {"restaurants", "products"}) {
    CAPTURE(name);
    const auto source = fs::path(VIEWCLEAN_SOURCE_DIR) / "data/datasets" / (std::string(name) + ".json");
    auto m = load_manifest(source);
    // A two-row stand-in with the same headers, next to copies of the views.
    const auto dir = scratch(std::string("manifest_") + name);
    fs::copy(fs::path(VIEWCLEAN_SOURCE_DIR) / "data/views", dir / "views");
    m.base_dir = dir / "datasets";
    fs::create_directories(m.base_dir / name);
    std::string header = "id";
    std::string row1 = "a1";
    std::string row2 = "b2";
    for (const auto& c : m.columns) {
      header += "," + c.source;
      row1 += c.type == AttributeType::kNumber ? ",12.5" : ",san francisco apple";
      row2 += c.type == AttributeType::kNumber ? ",$13.00" : ",san francisco apple";
    }
    write_file(m.resolve(m.records), header + "\n" + row1 + "\n" + row2 + "\n");
    write_file(m.resolve(m.ground_truth), "left,right\na1,b2\n");
    auto ds = load_dataset(m);
    CHECK(ds.truth.matches.size() == 1);
    CHECK(ds.relation.size() == 2);
    // The row counts differ from the published ones, which only warns.
    CHECK_FALSE(ds.warnings.empty());
    if (std::string(name) == "restaurants") {
      CHECK(ds.views.size() == 4);  // JoinAvgScore needs a pre-joined score column
      CHECK(ds.relation.column_index("cuisine").has_value());
      CHECK(evaluate(ds.view("Count*"), ds.relation).rows[0][0] == Value::number(2));
    } else {
      CHECK(ds.views.size() == 4);
      CHECK(ds.relation.column_index("mfr").has_value());
      CHECK(provenance(ds.view("Select*"), ds.relation).size() == 2);
      const auto bins = evaluate(ds.view("PriceBins"), ds.relation);
      REQUIRE(bins.rows.size() == 1);
      CHECK(bins.rows[0][1] == Value::text("Bin 2: [10,100)"));
    }
    auto features = compute_features(ds.relation, {PairKey(0, 1)}, m.features);
    CHECK(features.at(PairKey(0, 1)).size() == m.features.size());
  }
}

TEST_CASE("experiment config parsing and validation") {
  auto cfg = experiment_config_from_json(nlohmann::json::parse(R"({
    "views": ["Top3"], "strategies": ["view_impact", "hybrid"], "repetitions": 4,
    "budgets": [73, 133], "batches": 20, "alphas": [0.0, 0.5, 1.0], "windows": [3, 16], "seed": 9})"));
  CHECK(cfg.targets.size() == 1);
  CHECK(cfg.strategies.size() == 2);
  CHECK(cfg.repetitions == 4);
  CHECK(cfg.master_seed == 9);
  CHECK(expand_grid(cfg).size() == 2 * 3 * 2);
  CHECK_NOTHROW(cfg.validate());
  auto back = experiment_config_from_json(experiment_config_to_json(cfg));
  CHECK(experiment_config_to_json(back) == experiment_config_to_json(cfg));

  CHECK_THROWS_AS(experiment_config_from_json(nlohmann::json::parse(R"({"views": ["Top3"], "repetitions": 0})")),
                  ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(nlohmann::json::parse(R"({"strategies": ["best"]})")), ConfigError);
  ExperimentConfig empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
  cfg.budgets = {5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.budgets.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config();
  cfg.targets = {{"Nope", {"Nope"}, Aggregation::kMax}};
  CHECK_THROWS_AS(run_experiment(synthetic(), cfg), ConfigError);
}

TEST_CASE("run seeds fan out by target, grid point and repetition") {
  std::set<std::uint64_t> seen;
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t g = 0; g < 3; ++g) {
      for (std::size_t r = 0; r < 5; ++r) seen.insert(run_seed(1, t, g, r));
    }
  }
  CHECK(seen.size() == 45);
  CHECK(run_seed(1, 0, 0, 0) == run_seed(1, 0, 0, 0));
  CHECK(run_seed(1, 0, 0, 0) != run_seed(2, 0, 0, 0));
}

TEST_CASE("metrics rows follow the runs") {
  auto cfg = small_config();
  std::ostringstream out;
  auto result = run_experiment(synthetic(), cfg, &out);
  REQUIRE(result.runs.size() == 6);

  const auto clean = evaluate(synthetic_top3_view(), apply_dedup(synthetic().relation, synthetic().truth.matches));
  const double initial = view_distance(evaluate(synthetic_top3_view(), synthetic().relation), clean);
  CHECK(result.initial_distance.at("Top3") == doctest::Approx(initial));

  std::size_t expected_rows = 0;
  for (const auto& run : result.runs) {
    REQUIRE(!run.rows.empty());
    expected_rows += run.rows.size();
    CHECK(run.rows.front().iteration == 0);
    CHECK(run.rows.front().labels_used == 0);
    CHECK(run.rows.front().dist_to_clean == doctest::Approx(initial));
    CHECK_FALSE(run.rows.front().dist_to_prev.has_value());
    CHECK(run.rows.back().stopped == run.reason);
    CHECK(run.rows.back().labels_used == run.labels_used);
    for (std::size_t k = 0; k < run.rows.size(); ++k) {
      CHECK(run.rows[k].iteration == k);
      CHECK(run.rows[k].dist_to_clean >= 0.0);
      if (k > 0) CHECK(run.rows[k].labels_used == 13 + (k - 1) * 20);
      if (k + 1 < run.rows.size()) CHECK(run.rows[k].stopped == StopReason::kNone);
    }
    if (run.labels_to_clean) {
      bool found = false;
      for (const auto& row : run.rows) {
        if (!found && row.dist_to_clean <= cfg.clean_threshold) {
          CHECK(row.labels_used == *run.labels_to_clean);
          found = true;
        }
      }
      CHECK(found);
    }
  }
  // Header plus one line per (run, iteration).
  std::size_t lines = 0;
  std::string line;
  std::istringstream in(out.str());
  while (std::getline(in, line)) ++lines;
  CHECK(lines == expected_rows + 1);

  // Strategies share seeds per repetition.
  CHECK(result.runs[0].rows[0].seed == result.runs[3].rows[0].seed);
  CHECK(result.runs[0].rows[0].seed != result.runs[1].rows[0].seed);

  REQUIRE(result.groups.size() == 2);
  for (const auto& g : result.groups) {
    std::size_t total = 0;
    for (const auto& [_, n] : g.reasons) total += n;
    CHECK(total == 3);
    CHECK(g.monotone_fraction >= 0.0);
    CHECK(g.monotone_fraction <= 1.0);
  }
}

TEST_CASE("metrics are byte identical across repeats and worker counts") {
  auto cfg = small_config();
  cfg.holdout = true;
  std::ostringstream a;
  std::ostringstream b;
  std::ostringstream c;
  run_experiment(synthetic(), cfg, &a);
  run_experiment(synthetic(), cfg, &b);
  cfg.workers = 4;
  run_experiment(synthetic(), cfg, &c);
  CHECK(a.str() == b.str());
  CHECK(a.str() == c.str());
  CHECK(a.str().find("\tnan\t") != std::string::npos);  // no F1 on the dirty row

  cfg.master_seed = 2;
  std::ostringstream d;
  run_experiment(synthetic(), cfg, &d);
  CHECK(a.str() != d.str());
}

TEST_CASE("summary curves carry stopped runs forward") {
  auto cfg = small_config();
  cfg.strategies = {Strategy::kViewImpact};
  cfg.budgets = {300};
  auto result = run_experiment(synthetic(), cfg);
  std::size_t longest = 0;
  for (const auto& r : result.runs) longest = std::max(longest, r.rows.size());
  REQUIRE(result.curve.size() == longest);
  const auto& last = result.curve.back();
  double mean = 0.0;
  for (const auto& r : result.runs) mean += r.rows.back().dist_to_clean;
  CHECK(last.dist_mean == doctest::Approx(mean / 3));
  CHECK(result.curve.front().dist_stddev == 0.0);

  const auto& g = result.groups.at(0);
  double to_clean = 0.0;
  for (const auto& r : result.runs) {
    to_clean += r.labels_to_clean ? double(*r.labels_to_clean) : double(cfg.budgets[0] + cfg.batches[0]);
  }
  CHECK(g.labels_to_clean_mean == doctest::Approx(to_clean / 3));
  const auto text = format_summary_text(result, cfg);
  CHECK(text.find("Top3 view_impact") != std::string::npos);
}

TEST_CASE("experiment files are written") {
  const auto dir = scratch("files");
  auto cfg = small_config();
  cfg.output_dir = dir;
  run_experiment_to_files(synthetic(), cfg);
  for (const char* f : {"metrics.tsv", "summary.tsv", "summary.txt"}) CHECK(fs::exists(dir / f));
  cfg.output_dir.clear();
  CHECK_THROWS_AS(run_experiment_to_files(synthetic(), cfg), ConfigError);
}

TEST_CASE("dashboards record per-view distances") {
  auto input = synthetic();
  ViewSpec count;
  count.name = "Count*";
  count.selection = synthetic_top3_view().selection;
  count.aggregates = {{AggregateFn::kCountStar, "", "count"}};
  input.views.emplace(count.name, count);
  auto cfg = small_config();
  cfg.targets = {{"both", {"Top3", "Count*"}, Aggregation::kSum}};
  cfg.strategies = {Strategy::kViewImpact};
  cfg.repetitions = 1;
  std::ostringstream out;
  auto result = run_experiment(input, cfg, &out);
  CHECK(result.initial_distance.size() == 2);
  for (const auto& row : result.runs[0].rows) CHECK(row.per_view.size() == 2);
  CHECK(out.str().find("per_view") != std::string::npos);
}

TEST_CASE("blocking report stages") {
  const auto& input = synthetic();
  const auto& view = input.views.at("Top3");
  auto report = blocking_report(input.relation, input.truth, view, input.features, input.blocking);
  REQUIRE(report.stages.size() == 3);
  const auto n = input.relation.size();
  CHECK(report.stages[0].rows == n);
  CHECK(report.stages[0].pairs == n * (n - 1) / 2);
  CHECK(report.stages[0].ordered_pairs == n * (n - 1));
  CHECK(report.stages[0].positives == input.truth.matches.size());

  const auto prov = provenance(view, input.relation);
  CHECK(report.stages[1].rows == prov.size());
  CHECK(report.stages[1].pairs == prov.size() * (prov.size() - 1) / 2);
  std::size_t inside = 0;
  for (const auto& p : input.truth.matches) inside += prov.contains(p.first()) && prov.contains(p.second());
  CHECK(report.stages[1].positives == inside);

  CHECK(report.stages[2].pairs < report.stages[1].pairs);
  CHECK(report.stages[2].positives <= report.stages[1].positives);
  CHECK(report.stages[2].positive_percent ==
        doctest::Approx(100.0 * report.stages[2].positives / report.stages[2].pairs));

  auto raw = blocking_report(input.relation, input.truth, view, input.features, BlockingRule::none());
  CHECK(raw.stages[2].pairs == raw.stages[1].pairs);
  CHECK(raw.stages[2].positives == raw.stages[1].positives);
  CHECK(format_blocking_report(report).find("view and feature blocking") != std::string::npos);
}
