#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewclean/cleaning.hpp"
#include "viewclean/dataset.hpp"

namespace viewclean {

// Everything an experiment reads: the relation, its true matches, the pair
// features, the blocking rule, and the named views.
struct ExperimentInput {
  std::string name;
  Relation relation;
  GroundTruth truth;
  FeatureSpec features;
  BlockingRule blocking;
  std::map<std::string, ViewSpec> views;
};

ExperimentInput input_from_dataset(const Dataset& dataset);
ExperimentInput synthetic_input(const SyntheticOptions& options);

// One cleaning target: a single view, or several views cleaned together.
struct Target {
  std::string name;
  std::vector<std::string> views;
  Aggregation aggregation = Aggregation::kMax;
};

struct ExperimentConfig {
  std::vector<Target> targets;
  std::vector<Strategy> strategies = {Strategy::kViewImpact};
  std::size_t repetitions = 20;
  std::vector<std::size_t> budgets = {73};
  std::vector<std::size_t> batches = {20};
  std::vector<std::size_t> initial_batches = {13};
  std::vector<double> alphas = {1.0};
  std::vector<std::size_t> windows = {3};
  double epsilon = 0.01;
  InitialSelection initial = InitialSelection::kAuto;
  bool holdout = false;
  std::size_t ensemble_members = 10;
  KernelKind kernel = KernelKind::kLinear;
  // Runs reaching this distance to the clean view count as cleaned in the
  // summary.
  double clean_threshold = 0.01;
  std::uint64_t master_seed = 1;
  std::size_t workers = 1;
  std::filesystem::path output_dir;

  // Throws ConfigError on an empty grid or zero repetitions.
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct GridPoint {
  std::size_t budget = 0;
  std::size_t batch = 0;
  std::size_t initial_batch = 0;
  double alpha = 1.0;
  std::size_t window = 0;
};

// Cartesian product of the config's lists, in a fixed order.
std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg);

// Seeds fan out from the master seed by (target, grid point, repetition).
// Strategies share seeds, so a repetition compares them on the same draws.
std::uint64_t run_seed(std::uint64_t master, std::size_t target, std::size_t grid, std::size_t rep);

struct MetricRow {
  std::size_t run_id = 0;
  std::string target;
  Strategy strategy = Strategy::kViewImpact;
  GridPoint grid;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;  // 0: dirty view, 1: after the initial batch, ...
  std::size_t labels_used = 0;
  double dist_to_clean = 0.0;
  std::optional<double> dist_to_prev;
  std::optional<double> f1;
  std::vector<double> per_view;  // dashboards only
  StopReason stopped = StopReason::kNone;  // set on a run's final row
};

struct RunResult {
  std::size_t run_id = 0;
  std::vector<MetricRow> rows;
  StopReason reason = StopReason::kNone;
  std::size_t labels_used = 0;
  // Labels spent when the distance to the clean view first reached the
  // threshold; empty when it never did.
  std::optional<std::size_t> labels_to_clean;
  bool monotone = true;  // distance to clean never increased
};

struct SummaryRow {
  std::string target;
  Strategy strategy = Strategy::kViewImpact;
  GridPoint grid;
  std::size_t iteration = 0;
  std::size_t runs = 0;
  double labels_mean = 0.0;
  double dist_mean = 0.0;
  double dist_stddev = 0.0;
  std::optional<double> f1_mean;
  std::optional<double> f1_stddev;
};

struct GroupSummary {
  std::string target;
  Strategy strategy = Strategy::kViewImpact;
  GridPoint grid;
  std::size_t runs = 0;
  std::size_t cleaned_runs = 0;
  // Mean labels to reach the threshold; a run that never does counts as
  // budget + batch.
  double labels_to_clean_mean = 0.0;
  double monotone_fraction = 0.0;
  double final_dist_mean = 0.0;
  std::map<StopReason, std::size_t> reasons;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<SummaryRow> curve;       // mean and stddev per iteration
  std::vector<GroupSummary> groups;    // one per (target, strategy, grid point)
  std::map<std::string, double> initial_distance;  // per view, dirty vs clean
};

// Runs every (target, grid point, strategy, repetition) with the oracle
// labeler. Runs execute on `cfg.workers` threads; rows are emitted in run
// order through `sink` (when given) as runs complete, so output is identical
// for any worker count. Stopped runs carry their last value forward in the
// curve summary.
ExperimentResult run_experiment(const ExperimentInput& input, const ExperimentConfig& cfg,
                                std::ostream* sink = nullptr);

// Tab-separated metrics. Float columns use a fixed format.
void write_metrics_header(std::ostream& out, bool per_view);
void write_metric_row(std::ostream& out, const MetricRow& row, bool per_view);
void write_summary(std::ostream& out, const ExperimentResult& result);
std::string format_summary_text(const ExperimentResult& result, const ExperimentConfig& cfg);

// Writes metrics.tsv, summary.tsv and summary.txt into cfg.output_dir.
ExperimentResult run_experiment_to_files(const ExperimentInput& input, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

struct BlockingStage {
  std::string name;
  std::size_t rows = 0;
  std::size_t pairs = 0;          // unordered
  std::size_t ordered_pairs = 0;  // n (n - 1) convention
  std::size_t positives = 0;
  double positive_percent = 0.0;
};

struct BlockingReport {
  std::string view;
  std::vector<BlockingStage> stages;  // all records, view blocking, feature blocking
};

// `rule` empty (BlockingRule::none()) gives the raw counts at the last stage.
BlockingReport blocking_report(const Relation& rel, const GroundTruth& truth, const ViewSpec& spec,
                               const FeatureSpec& features, const BlockingRule& rule);
std::string format_blocking_report(const BlockingReport& report);

}  // namespace viewclean
