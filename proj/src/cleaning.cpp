#include "viewclean/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace viewclean {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kViewImpact:
      return "view_impact";
    case Strategy::kHybrid:
      return "hybrid";
    case Strategy::kUncertainty:
      return "uncertainty";
    case Strategy::kEntropy:
      return "entropy";
    case Strategy::kRandom:
      return "random";
    case Strategy::kRoundRobin:
      return "round_robin";
  }
  return "?";
}

std::string_view to_string(InitialSelection s) {
  switch (s) {
    case InitialSelection::kAuto:
      return "auto";
    case InitialSelection::kBias:
      return "bias";
    case InitialSelection::kRandom:
      return "random";
    case InitialSelection::kRoundRobin:
      return "round_robin";
  }
  return "?";
}

std::string_view to_string(Aggregation a) { return a == Aggregation::kMax ? "max" : "sum"; }

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kNone:
      return "running";
    case StopReason::kBudget:
      return "budget";
    case StopReason::kConverged:
      return "converged";
    case StopReason::kExhausted:
      return "exhausted";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view name) {
  for (auto s : {Strategy::kViewImpact, Strategy::kHybrid, Strategy::kUncertainty, Strategy::kEntropy,
                 Strategy::kRandom, Strategy::kRoundRobin}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

InitialSelection initial_selection_from_string(std::string_view name) {
  for (auto s : {InitialSelection::kAuto, InitialSelection::kBias, InitialSelection::kRandom,
                 InitialSelection::kRoundRobin}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown initial selection '" + std::string(name) + "'");
}

Aggregation aggregation_from_string(std::string_view name) {
  if (name == "max") return Aggregation::kMax;
  if (name == "sum") return Aggregation::kSum;
  throw ConfigError("unknown aggregation '" + std::string(name) + "'");
}

ImpactTable aggregate_impacts(std::span<const ImpactTable> tables, Aggregation aggregation) {
  ImpactTable out;
  for (const auto& table : tables) {
    for (const auto& [id, score] : table) {
      auto [it, inserted] = out.emplace(id, score);
      if (inserted) continue;
      it->second = aggregation == Aggregation::kMax ? std::max(it->second, score) : it->second + score;
    }
  }
  return out;
}

PairScores make_pair_scores(const ImpactTable& impacts, const PairSet& blocked) {
  auto impact_of = [&](RecordId id) {
    auto it = impacts.find(id);
    return it == impacts.end() ? 0.0 : it->second;
  };
  PairScores ps;
  ps.tuple_scores = impacts;
  for (const auto& p : blocked) {
    ps.scores.emplace_hint(ps.scores.end(), p, std::max(impact_of(p.first()), impact_of(p.second())));
  }
  return ps;
}

CandidateSpace prepare_candidates(const DashboardSpec& dashboard, const Relation& rel,
                                  const FeatureSpec& features, const BlockingRule& rule,
                                  std::size_t workers) {
  if (dashboard.views.empty()) throw ConfigError("a dashboard needs at least one view");
  CandidateSpace space;
  space.dashboard = dashboard;
  std::vector<ImpactTable> tables;
  for (const auto& view : dashboard.views) {
    tables.push_back(view_impact_scores(view, rel, workers));
    const auto prov = provenance(view, rel);
    space.provenance.insert(prov.begin(), prov.end());
  }
  space.impacts = aggregate_impacts(tables, dashboard.aggregation);

  const PairSet pairs = build_pairs(space.provenance);
  space.view_pair_count = pairs.size();
  const FeatureTable all = compute_features(rel, pairs, features);
  const PairSet blocked = apply_blocking(pairs, all, rule);
  std::map<PairKey, std::vector<double>> kept;
  for (const auto& p : blocked) kept.emplace_hint(kept.end(), p, all.at(p));
  space.features = FeatureTable(features, std::move(kept));
  space.pair_scores = make_pair_scores(space.impacts, blocked);
  return space;
}

PairScores pair_scores(const ViewSpec& spec, const Relation& rel, const FeatureSpec& features,
                       const BlockingRule& rule) {
  return prepare_candidates({{spec}, Aggregation::kMax}, rel, features, rule).pair_scores;
}

PairScores dashboard_pair_scores(const DashboardSpec& dashboard, const Relation& rel,
                                 const FeatureSpec& features, const BlockingRule& rule) {
  return prepare_candidates(dashboard, rel, features, rule).pair_scores;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<PairKey> pick(std::span<const PairKey> candidates, std::span<const double> weights, std::size_t b,
                          Rng& rng) {
  std::vector<PairKey> out;
  for (auto i : weighted_sample(weights, b, rng)) out.push_back(candidates[i]);
  return out;
}

}  // namespace

std::vector<PairKey> select_bias(std::size_t b, const PairScores& ps, Rng& rng) {
  std::vector<PairKey> keys;
  std::vector<double> weights;
  keys.reserve(ps.size());
  weights.reserve(ps.size());
  for (const auto& [key, score] : ps.scores) {
    keys.push_back(key);
    weights.push_back(score);
  }
  return pick(keys, weights, b, rng);
}

std::vector<TopCandidate> top_pair_scores(const PairScores& ps, const MarginMap& margins) {
  struct Best {
    double margin;
    PairKey pair;
  };
  std::map<RecordId, Best> best;
  for (const auto& [key, score] : ps.scores) {
    auto it = margins.find(key);
    if (it == margins.end()) {
      throw std::out_of_range("no margin for pair (" + std::to_string(key.first()) + ", " +
                              std::to_string(key.second()) + ")");
    }
    const double m = std::abs(it->second);
    for (RecordId t : {key.first(), key.second()}) {
      auto [b, inserted] = best.try_emplace(t, Best{m, key});
      if (!inserted && (m < b->second.margin || (m == b->second.margin && key < b->second.pair))) {
        b->second = Best{m, key};
      }
    }
  }
  std::map<PairKey, double> reduced;
  for (const auto& [tuple, b] : best) {
    auto it = ps.tuple_scores.find(tuple);
    const double impact = it == ps.tuple_scores.end() ? 0.0 : it->second;
    auto [r, inserted] = reduced.emplace(b.pair, impact);
    if (!inserted) r->second = std::max(r->second, impact);
  }
  std::vector<TopCandidate> out;
  out.reserve(reduced.size());
  for (const auto& [pair, impact] : reduced) out.push_back({pair, impact});
  return out;
}

std::vector<PairKey> select_top(std::size_t b, const PairScores& ps, const MarginMap& margins, Rng& rng) {
  const auto reduced = top_pair_scores(ps, margins);
  std::vector<PairKey> keys;
  std::vector<double> weights;
  for (const auto& c : reduced) {
    keys.push_back(c.pair);
    weights.push_back(c.impact);
  }
  return pick(keys, weights, b, rng);
}

std::vector<PairKey> select_hybrid(std::size_t b, const PairScores& ps, const MarginMap& margins,
                                   const std::map<PairKey, double>& uncertainty, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  const auto reduced = top_pair_scores(ps, margins);
  std::vector<PairKey> keys;
  std::vector<double> impact;
  std::vector<double> unc;
  for (const auto& c : reduced) {
    auto it = uncertainty.find(c.pair);
    if (it == uncertainty.end()) throw std::out_of_range("no uncertainty score for a candidate pair");
    keys.push_back(c.pair);
    impact.push_back(c.impact);
    unc.push_back(it->second);
  }
  const double max_impact = impact.empty() ? 0.0 : *std::max_element(impact.begin(), impact.end());
  const double max_unc = unc.empty() ? 0.0 : *std::max_element(unc.begin(), unc.end());
  std::vector<double> weights(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const double ni = max_impact > 0.0 ? impact[i] / max_impact : 0.0;
    const double nu = max_unc > 0.0 ? unc[i] / max_unc : 0.0;
    weights[i] = alpha * ni + (1.0 - alpha) * nu;
  }
  return pick(keys, weights, b, rng);
}

std::vector<double> round_robin_weights(std::span<const std::vector<double>> features) {
  const std::size_t n = features.size();
  std::vector<double> weights(n, 0.0);
  if (n == 0) return weights;
  const std::size_t arity = features.front().size();
  std::vector<std::size_t> order(n);
  for (std::size_t f = 0; f < arity; ++f) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return features[a][f] > features[b][f]; });
    std::size_t rank = 1;
    for (std::size_t pos = 0; pos < n; ++pos) {
      if (pos > 0 && features[order[pos]][f] != features[order[pos - 1]][f]) rank = pos + 1;
      weights[order[pos]] = std::max(weights[order[pos]], 1.0 / static_cast<double>(rank));
    }
  }
  if (arity == 0) std::fill(weights.begin(), weights.end(), 1.0);
  return weights;
}

std::vector<PairKey> select_baseline(BaselineKind kind, std::size_t b, std::span<const PairKey> candidates,
                                     std::span<const double> scores,
                                     std::span<const std::vector<double>> features, Rng& rng) {
  switch (kind) {
    case BaselineKind::kUncertainty:
    case BaselineKind::kEntropy:
      if (scores.size() != candidates.size()) throw std::invalid_argument("one score per candidate required");
      return pick(candidates, scores, b, rng);
    case BaselineKind::kRandom: {
      const std::vector<double> flat(candidates.size(), 1.0);
      return pick(candidates, flat, b, rng);
    }
    case BaselineKind::kRoundRobin: {
      if (features.size() != candidates.size()) throw std::invalid_argument("one feature row per candidate required");
      const auto weights = round_robin_weights(features);
      return pick(candidates, weights, b, rng);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------

void CleaningConfig::validate() const {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  if (initial_batch == 0) throw ConfigError("initial batch size must be at least 1");
  if (initial_batch > budget) throw ConfigError("initial batch exceeds the labeling budget");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  if (!(distance.epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (distance.window == 0) throw ConfigError("convergence window must be at least 1");
  if (ensemble_members == 0) throw ConfigError("ensemble needs at least one member");
}

InitialSelection CleaningConfig::resolved_initial() const {
  if (initial != InitialSelection::kAuto) return initial;
  switch (strategy) {
    case Strategy::kViewImpact:
    case Strategy::kHybrid:
      return InitialSelection::kBias;
    case Strategy::kRoundRobin:
      return InitialSelection::kRoundRobin;
    default:
      return InitialSelection::kRandom;
  }
}

nlohmann::json cleaning_config_to_json(const CleaningConfig& cfg) {
  return {{"budget", cfg.budget},
          {"batch", cfg.batch},
          {"initial_batch", cfg.initial_batch},
          {"alpha", cfg.alpha},
          {"strategy", to_string(cfg.strategy)},
          {"initial", to_string(cfg.initial)},
          {"epsilon", cfg.distance.epsilon},
          {"window", cfg.distance.window},
          {"seed", cfg.seed},
          {"holdout", cfg.holdout},
          {"holdout_fraction", cfg.holdout_fraction},
          {"ensemble_members", cfg.ensemble_members},
          {"kernel", cfg.classifier.kernel == KernelKind::kLinear ? "linear" : "gaussian"},
          {"c", cfg.classifier.c}};
}

CleaningConfig cleaning_config_from_json(const nlohmann::json& doc) {
  try {
    CleaningConfig cfg;
    auto size_field = [&](const char* name, std::size_t fallback) {
      if (!doc.contains(name)) return fallback;
      const auto v = doc[name].get<long long>();
      if (v < 0) throw ConfigError(std::string(name) + " must be non-negative");
      return static_cast<std::size_t>(v);
    };
    cfg.budget = size_field("budget", cfg.budget);
    cfg.batch = size_field("batch", cfg.batch);
    cfg.initial_batch = size_field("initial_batch", cfg.initial_batch);
    cfg.alpha = doc.value("alpha", cfg.alpha);
    cfg.strategy = strategy_from_string(doc.value("strategy", std::string(to_string(cfg.strategy))));
    cfg.initial = initial_selection_from_string(doc.value("initial", std::string(to_string(cfg.initial))));
    cfg.distance.epsilon = doc.value("epsilon", cfg.distance.epsilon);
    cfg.distance.window = size_field("window", cfg.distance.window);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.holdout = doc.value("holdout", cfg.holdout);
    cfg.holdout_fraction = doc.value("holdout_fraction", cfg.holdout_fraction);
    cfg.ensemble_members = size_field("ensemble_members", cfg.ensemble_members);
    const auto kernel = doc.value("kernel", std::string("linear"));
    if (kernel != "linear" && kernel != "gaussian") throw ConfigError("kernel must be linear or gaussian");
    cfg.classifier.kernel = kernel == "linear" ? KernelKind::kLinear : KernelKind::kGaussian;
    cfg.classifier.c = doc.value("c", cfg.classifier.c);
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed cleaning config: ") + e.what());
  }
}

std::vector<bool> OracleLabeler::label(std::span<const LabelRequest> requests) {
  ++calls_;
  std::vector<bool> out;
  out.reserve(requests.size());
  for (const auto& r : requests) out.push_back(truth_->is_match(r.pair));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kSelectionStream = 0x5E1EC7;
constexpr std::uint64_t kHoldoutStream = 0x401D;
constexpr std::uint64_t kEnsembleStream = 0xE75E;

}  // namespace

CleaningSession::CleaningSession(std::shared_ptr<const CleaningProblem> problem, CleaningConfig config)
    : problem_(std::move(problem)),
      config_(std::move(config)),
      selection_rng_(derive_seed(config_.seed, {kSelectionStream})) {
  config_.validate();
  remaining_ = problem_->candidates.pair_scores;
  for (const auto& view : problem_->candidates.dashboard.views) {
    dirty_views_.push_back(evaluate(view, problem_->relation));
  }
  current_views_ = dirty_views_;

  if (config_.holdout && !remaining_.empty()) {
    std::vector<PairKey> keys;
    for (const auto& [key, _] : remaining_.scores) keys.push_back(key);
    Rng rng(derive_seed(config_.seed, {kHoldoutStream}));
    const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(keys.size()) * config_.holdout_fraction));
    for (auto i : uniform_sample(keys.size(), count, rng)) {
      holdout_.insert(keys[i]);
      remaining_.erase(keys[i]);
    }
  }

  const std::size_t size = std::min({config_.initial_batch, config_.budget, remaining_.size()});
  if (size == 0) {
    stop(StopReason::kExhausted);
    return;
  }
  outstanding_ = choose(size, true);
}

std::vector<PairKey> CleaningSession::choose(std::size_t size, bool initial) {
  const auto& features = problem_->candidates.features;
  std::vector<PairKey> keys;
  keys.reserve(remaining_.size());
  for (const auto& [key, _] : remaining_.scores) keys.push_back(key);
  auto feature_rows = [&] {
    std::vector<std::vector<double>> rows;
    rows.reserve(keys.size());
    for (const auto& k : keys) rows.push_back(features.learning_features(k));
    return rows;
  };
  auto ensemble = [&] {
    std::vector<FeatureVector> cands;
    cands.reserve(keys.size());
    for (const auto& k : keys) cands.push_back({k, features.learning_features(k)});
    return ensemble_scores(labeled_, cands, config_.ensemble_members,
                           derive_seed(config_.seed, {kEnsembleStream, iterations_}), config_.classifier);
  };

  if (initial) {
    switch (config_.resolved_initial()) {
      case InitialSelection::kRandom:
        return select_baseline(BaselineKind::kRandom, size, keys, {}, {}, selection_rng_);
      case InitialSelection::kRoundRobin: {
        const auto rows = feature_rows();
        return select_baseline(BaselineKind::kRoundRobin, size, keys, {}, rows, selection_rng_);
      }
      default:
        return select_bias(size, remaining_, selection_rng_);
    }
  }

  switch (config_.strategy) {
    case Strategy::kViewImpact:
      return select_top(size, remaining_, margins_, selection_rng_);
    case Strategy::kHybrid: {
      std::map<PairKey, double> unc;
      if (config_.alpha < 1.0) {
        for (const auto& s : ensemble()) unc.emplace(s.pair, s.uncertainty);
      } else {
        for (const auto& k : keys) unc.emplace(k, 0.0);
      }
      return select_hybrid(size, remaining_, margins_, unc, config_.alpha, selection_rng_);
    }
    case Strategy::kUncertainty:
    case Strategy::kEntropy: {
      const bool by_entropy = config_.strategy == Strategy::kEntropy;
      std::vector<double> scores;
      for (const auto& s : ensemble()) scores.push_back(by_entropy ? s.entropy : s.uncertainty);
      return select_baseline(by_entropy ? BaselineKind::kEntropy : BaselineKind::kUncertainty, size, keys, scores, {},
                             selection_rng_);
    }
    case Strategy::kRandom:
      return select_baseline(BaselineKind::kRandom, size, keys, {}, {}, selection_rng_);
    case Strategy::kRoundRobin: {
      const auto rows = feature_rows();
      return select_baseline(BaselineKind::kRoundRobin, size, keys, {}, rows, selection_rng_);
    }
  }
  return {};
}

std::vector<LabelRequest> CleaningSession::outstanding_requests() const {
  std::vector<LabelRequest> out;
  const auto& rel = problem_->relation;
  for (const auto& key : outstanding_) {
    auto it = remaining_.scores.find(key);
    out.push_back({key, &rel.record(key.first()), &rel.record(key.second()),
                   it == remaining_.scores.end() ? 0.0 : it->second});
  }
  return out;
}

std::optional<double> CleaningSession::last_change() const {
  if (!history_.empty()) return history_.back();
  return initial_change_;
}

double CleaningSession::views_distance(std::span<const ViewResult> a, std::span<const ViewResult> b) const {
  double total = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v) {
    const double d = view_distance(a[v], b[v]);
    total = problem_->candidates.dashboard.aggregation == Aggregation::kMax ? std::max(total, d) : total + d;
  }
  return total;
}

void CleaningSession::submit(const std::map<PairKey, bool>& answers) {
  if (stopped()) throw std::logic_error("session has stopped");
  if (answers.size() != outstanding_.size()) {
    throw SubmissionError("expected labels for " + std::to_string(outstanding_.size()) + " pairs, got " +
                          std::to_string(answers.size()));
  }
  for (const auto& key : outstanding_) {
    if (!answers.contains(key)) {
      throw SubmissionError("missing label for pair (" + std::to_string(key.first()) + ", " +
                            std::to_string(key.second()) + ")");
    }
  }

  const auto& features = problem_->candidates.features;
  std::vector<std::pair<PairKey, bool>> batch;
  for (const auto& key : outstanding_) {
    const bool dup = answers.at(key);
    labeled_.push_back({key, features.learning_features(key), dup});
    batch.emplace_back(key, dup);
    remaining_.erase(key);
  }
  transcript_.push_back(std::move(batch));
  outstanding_.clear();

  model_ = train(labeled_, config_.classifier);
  margins_.clear();
  dups_.clear();
  for (const auto& ex : labeled_) {
    if (ex.duplicate) dups_.insert(ex.pair);
  }
  auto classify = [&](const PairKey& key) {
    const double d = model_->decision(features.learning_features(key));
    margins_.emplace(key, d);
    if (d > 0.0) dups_.insert(key);
  };
  for (const auto& [key, _] : remaining_.scores) classify(key);
  for (const auto& key : holdout_) classify(key);

  const Relation cleaned = apply_dedup(problem_->relation, dups_);
  std::vector<ViewResult> next;
  for (const auto& view : problem_->candidates.dashboard.views) next.push_back(evaluate(view, cleaned));
  const double change = views_distance(next, current_views_);
  if (iterations_ == 0) {
    initial_change_ = change;
  } else {
    history_.push_back(change);
  }
  current_views_ = std::move(next);
  ++iterations_;

  if (converged(history_, config_.distance)) {
    stop(StopReason::kConverged);
  } else if (budget_remaining() < config_.batch) {
    stop(StopReason::kBudget);
  } else if (remaining_.empty()) {
    stop(StopReason::kExhausted);
  } else {
    select_next();
  }
}

void CleaningSession::select_next() {
  outstanding_ = choose(std::min(config_.batch, remaining_.size()), false);
}

void CleaningSession::stop(StopReason reason) {
  reason_ = reason;
  outstanding_.clear();
}

std::string CleaningSession::digest() const {
  std::string text;
  char buf[64];
  for (const auto& batch : transcript_) {
    for (const auto& [key, dup] : batch) {
      std::snprintf(buf, sizeof buf, "%u-%u:%d,", key.first(), key.second(), dup ? 1 : 0);
      text += buf;
    }
    text += '|';
  }
  for (double h : history_) {
    std::snprintf(buf, sizeof buf, "%.17g,", h);
    text += buf;
  }
  text += '|';
  for (const auto& p : dups_) {
    std::snprintf(buf, sizeof buf, "%u-%u,", p.first(), p.second());
    text += buf;
  }
  text += '|';
  text += to_string(reason_);
  for (const auto& v : current_views_) text += view_result_to_json(v).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::shared_ptr<const CleaningProblem> make_problem(Relation rel, const DashboardSpec& dashboard,
                                                    const FeatureSpec& features, const BlockingRule& rule,
                                                    std::size_t workers) {
  auto problem = std::make_shared<CleaningProblem>();
  problem->candidates = prepare_candidates(dashboard, rel, features, rule, workers);
  problem->relation = std::move(rel);
  return problem;
}

void drive(CleaningSession& session, Labeler& labeler) {
  while (!session.stopped()) {
    const auto requests = session.outstanding_requests();
    const auto answers = labeler.label(requests);
    if (answers.size() != requests.size()) throw SubmissionError("labeler returned the wrong number of labels");
    std::map<PairKey, bool> labels;
    for (std::size_t i = 0; i < requests.size(); ++i) labels.emplace(requests[i].pair, answers[i]);
    session.submit(labels);
  }
}

CleaningSession run_cleaning(std::shared_ptr<const CleaningProblem> problem, Labeler& labeler,
                             const CleaningConfig& config) {
  CleaningSession session(std::move(problem), config);
  drive(session, labeler);
  return session;
}

}  // namespace viewclean
