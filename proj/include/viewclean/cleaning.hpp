#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "viewclean/classifier.hpp"
#include "viewclean/pair_space.hpp"
#include "viewclean/relation.hpp"
#include "viewclean/sampling.hpp"
#include "viewclean/view.hpp"
#include "viewclean/view_distance.hpp"

namespace viewclean {

enum class Strategy { kViewImpact, kHybrid, kUncertainty, kEntropy, kRandom, kRoundRobin };
enum class InitialSelection { kAuto, kBias, kRandom, kRoundRobin };
enum class Aggregation { kMax, kSum };
enum class StopReason { kNone, kBudget, kConverged, kExhausted };

std::string_view to_string(Strategy s);
std::string_view to_string(InitialSelection s);
std::string_view to_string(Aggregation a);
std::string_view to_string(StopReason r);
Strategy strategy_from_string(std::string_view name);
InitialSelection initial_selection_from_string(std::string_view name);
Aggregation aggregation_from_string(std::string_view name);

struct DashboardSpec {
  std::vector<ViewSpec> views;
  Aggregation aggregation = Aggregation::kMax;
};

// Per-tuple MAX or SUM across views; a tuple present in no table is absent.
ImpactTable aggregate_impacts(std::span<const ImpactTable> tables, Aggregation aggregation);

// Candidate pairs with the impact of their generating tuples. A pair (t, u)
// is generated by both endpoints; its score is the larger of the two.
struct PairScores {
  std::map<PairKey, double> scores;
  ImpactTable tuple_scores;

  std::size_t size() const { return scores.size(); }
  bool empty() const { return scores.empty(); }
  bool contains(const PairKey& key) const { return scores.contains(key); }
  void erase(const PairKey& key) { scores.erase(key); }
};

PairScores make_pair_scores(const ImpactTable& impacts, const PairSet& blocked);

// Everything computed once per (relation, views, features, blocking):
// impact scores, provenance pairs, their features, and the blocked scores.
struct CandidateSpace {
  DashboardSpec dashboard;
  ImpactTable impacts;
  std::set<RecordId> provenance;  // union over the dashboard's views
  std::size_t view_pair_count = 0;
  FeatureTable features;
  PairScores pair_scores;
};

CandidateSpace prepare_candidates(const DashboardSpec& dashboard, const Relation& rel,
                                  const FeatureSpec& features, const BlockingRule& rule,
                                  std::size_t workers = 0);

PairScores pair_scores(const ViewSpec& spec, const Relation& rel, const FeatureSpec& features,
                       const BlockingRule& rule);
PairScores dashboard_pair_scores(const DashboardSpec& dashboard, const Relation& rel,
                                 const FeatureSpec& features, const BlockingRule& rule);

// ---------------------------------------------------------------------------
// Batch selection. All of these sample without replacement and return at
// most b pairs.

std::vector<PairKey> select_bias(std::size_t b, const PairScores& ps, Rng& rng);

using MarginMap = std::map<PairKey, double>;  // signed decision values

struct TopCandidate {
  PairKey pair;
  double impact = 0.0;
};

// For every generating tuple, its remaining pair with the smallest |margin|
// (ties go to the smaller pair), weighted by the tuple's impact. A pair picked
// by both endpoints keeps the larger weight. Ordered by pair.
// Throws std::out_of_range when a pair has no margin.
std::vector<TopCandidate> top_pair_scores(const PairScores& ps, const MarginMap& margins);

std::vector<PairKey> select_top(std::size_t b, const PairScores& ps, const MarginMap& margins, Rng& rng);

// Weight = alpha * impact / max impact + (1 - alpha) * uncertainty / max
// uncertainty over the reduced candidate set (a term is 0 when its maximum
// is 0).
std::vector<PairKey> select_hybrid(std::size_t b, const PairScores& ps, const MarginMap& margins,
                                   const std::map<PairKey, double>& uncertainty, double alpha, Rng& rng);

enum class BaselineKind { kUncertainty, kEntropy, kRandom, kRoundRobin };

// Weight 1/rank, where rank is a pair's best position over per-feature
// descending orders (tied values share a rank).
std::vector<double> round_robin_weights(std::span<const std::vector<double>> features);

// `scores` holds the ensemble score per candidate (uncertainty or entropy);
// `features` is needed by round-robin only.
std::vector<PairKey> select_baseline(BaselineKind kind, std::size_t b, std::span<const PairKey> candidates,
                                     std::span<const double> scores,
                                     std::span<const std::vector<double>> features, Rng& rng);

// ---------------------------------------------------------------------------

struct CleaningConfig {
  std::size_t budget = 73;
  std::size_t batch = 20;
  std::size_t initial_batch = 13;
  double alpha = 1.0;  // hybrid only
  Strategy strategy = Strategy::kViewImpact;
  InitialSelection initial = InitialSelection::kAuto;
  DistanceConfig distance;
  std::uint64_t seed = 0;
  bool holdout = false;
  double holdout_fraction = 0.5;
  std::size_t ensemble_members = 10;
  TrainOptions classifier;

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  // kAuto resolves to bias sampling for view-driven strategies and to
  // uniform sampling for the classic active-learning baselines.
  InitialSelection resolved_initial() const;
};

nlohmann::json cleaning_config_to_json(const CleaningConfig& cfg);
CleaningConfig cleaning_config_from_json(const nlohmann::json& doc);

struct LabelRequest {
  PairKey pair;
  const Record* left = nullptr;
  const Record* right = nullptr;
  double impact = 0.0;
};

class Labeler {
 public:
  virtual ~Labeler() = default;
  // One answer per request, true meaning duplicate.
  virtual std::vector<bool> label(std::span<const LabelRequest> requests) = 0;
};

class OracleLabeler : public Labeler {
 public:
  explicit OracleLabeler(const GroundTruth& truth) : truth_(&truth) {}
  std::vector<bool> label(std::span<const LabelRequest> requests) override;
  std::size_t calls() const { return calls_; }

 private:
  const GroundTruth* truth_;
  std::size_t calls_ = 0;
};

// A submission that does not answer exactly the outstanding batch.
class SubmissionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CleaningProblem {
  Relation relation;
  CandidateSpace candidates;
};

// One cleaning loop, advanced one labeled batch at a time. The first
// outstanding batch is the initial training set; every submission retrains
// the classifier from scratch on all user labels, reclassifies the remaining
// and held-out pairs, removes the resulting duplicates and recomputes the
// views. Later batches are full-sized: the loop stops on budget once fewer
// than `batch` labels remain, so labels used = initial + k * batch.
class CleaningSession {
 public:
  CleaningSession(std::shared_ptr<const CleaningProblem> problem, CleaningConfig config);

  const CleaningConfig& config() const { return config_; }
  const CleaningProblem& problem() const { return *problem_; }

  // Empty once stopped.
  const std::vector<PairKey>& outstanding() const { return outstanding_; }
  std::vector<LabelRequest> outstanding_requests() const;

  // Answers must cover exactly the outstanding batch; otherwise throws
  // SubmissionError and nothing changes. Throws std::logic_error when stopped.
  void submit(const std::map<PairKey, bool>& answers);

  bool stopped() const { return reason_ != StopReason::kNone; }
  StopReason stop_reason() const { return reason_; }

  std::size_t labels_used() const { return labeled_.size(); }
  std::size_t budget_remaining() const { return config_.budget - labeled_.size(); }
  // Classifier trainings so far (the initial one included).
  std::size_t iterations() const { return iterations_; }
  std::size_t batches_submitted() const { return transcript_.size(); }

  const std::vector<LabeledPair>& labeled() const { return labeled_; }
  const std::vector<std::vector<std::pair<PairKey, bool>>>& transcript() const { return transcript_; }
  const std::vector<double>& history() const { return history_; }
  std::optional<double> initial_change() const { return initial_change_; }
  std::optional<double> last_change() const;

  const std::vector<ViewResult>& dirty_views() const { return dirty_views_; }
  const std::vector<ViewResult>& current_views() const { return current_views_; }
  const PairSet& duplicates() const { return dups_; }
  const std::optional<Model>& model() const { return model_; }
  const PairScores& remaining() const { return remaining_; }
  const PairSet& holdout() const { return holdout_; }
  const MarginMap& margins() const { return margins_; }

  // Combined change between two sets of views, by the dashboard aggregation.
  double views_distance(std::span<const ViewResult> a, std::span<const ViewResult> b) const;

  // Stable hex digest of the labels, histories, duplicates and views.
  std::string digest() const;

 private:
  void select_next();
  void stop(StopReason reason);
  std::vector<PairKey> choose(std::size_t size, bool initial);

  std::shared_ptr<const CleaningProblem> problem_;
  CleaningConfig config_;
  Rng selection_rng_;
  PairScores remaining_;
  PairSet holdout_;
  std::vector<PairKey> outstanding_;
  std::vector<LabeledPair> labeled_;
  std::vector<std::vector<std::pair<PairKey, bool>>> transcript_;
  std::optional<Model> model_;
  MarginMap margins_;
  PairSet dups_;
  std::vector<ViewResult> dirty_views_;
  std::vector<ViewResult> current_views_;
  std::vector<double> history_;
  std::optional<double> initial_change_;
  std::size_t iterations_ = 0;
  StopReason reason_ = StopReason::kNone;
};

std::shared_ptr<const CleaningProblem> make_problem(Relation rel, const DashboardSpec& dashboard,
                                                    const FeatureSpec& features, const BlockingRule& rule,
                                                    std::size_t workers = 0);

// Feeds outstanding batches to the labeler until the session stops. If the
// labeler throws, the exception propagates and the session keeps its
// outstanding batch, so driving it again resumes where it left off.
void drive(CleaningSession& session, Labeler& labeler);

CleaningSession run_cleaning(std::shared_ptr<const CleaningProblem> problem, Labeler& labeler,
                             const CleaningConfig& config);

}  // namespace viewclean
