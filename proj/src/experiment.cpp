#include "viewclean/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>
#include <thread>

namespace viewclean {

using nlohmann::json;

ExperimentInput input_from_dataset(const Dataset& dataset) {
  return {dataset.manifest.name, dataset.relation,        dataset.truth,
          dataset.manifest.features, dataset.manifest.blocking, dataset.views};
}

ExperimentInput synthetic_input(const SyntheticOptions& options) {
  auto data = generate_synthetic(options);
  ExperimentInput input;
  input.name = "synthetic";
  input.relation = std::move(data.relation);
  input.truth = std::move(data.truth);
  input.features = synthetic_features();
  input.blocking = synthetic_blocking();
  auto view = synthetic_top3_view();
  input.views.emplace(view.name, view);
  return input;
}

void ExperimentConfig::validate() const {
  if (repetitions == 0) throw ConfigError("repetitions must be at least 1");
  if (targets.empty()) throw ConfigError("no view to clean");
  for (const auto& t : targets) {
    if (t.views.empty()) throw ConfigError("target '" + t.name + "' has no views");
  }
  if (strategies.empty() || budgets.empty() || batches.empty() || initial_batches.empty() || alphas.empty() ||
      windows.empty()) {
    throw ConfigError("experiment grid is empty");
  }
  for (const auto& g : expand_grid(*this)) {
    CleaningConfig c;
    c.budget = g.budget;
    c.batch = g.batch;
    c.initial_batch = g.initial_batch;
    c.alpha = g.alpha;
    c.distance = {epsilon, g.window};
    c.ensemble_members = ensemble_members;
    c.validate();
  }
}

namespace {

template <typename T>
std::vector<T> list_field(const json& doc, const char* name, std::vector<T> fallback) {
  if (!doc.contains(name)) return fallback;
  if (doc[name].is_array()) return doc[name].get<std::vector<T>>();
  return {doc[name].get<T>()};
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  try {
    ExperimentConfig cfg;
    if (doc.contains("targets")) {
      for (const auto& t : doc["targets"]) {
        Target target;
        target.views = list_field<std::string>(t, "views", {});
        target.name = t.value("name", target.views.empty() ? std::string() : target.views.front());
        target.aggregation = aggregation_from_string(t.value("aggregation", std::string("max")));
        cfg.targets.push_back(std::move(target));
      }
    }
    for (const auto& v : list_field<std::string>(doc, "views", {})) cfg.targets.push_back({v, {v}, Aggregation::kMax});
    cfg.strategies.clear();
    for (const auto& s : list_field<std::string>(doc, "strategies", {"view_impact"})) {
      cfg.strategies.push_back(strategy_from_string(s));
    }
    const auto reps = doc.value("repetitions", 20LL);
    if (reps < 1) throw ConfigError("repetitions must be at least 1");
    cfg.repetitions = static_cast<std::size_t>(reps);
    cfg.budgets = list_field<std::size_t>(doc, "budgets", cfg.budgets);
    cfg.batches = list_field<std::size_t>(doc, "batches", cfg.batches);
    cfg.initial_batches = list_field<std::size_t>(doc, "initial_batches", cfg.initial_batches);
    cfg.alphas = list_field<double>(doc, "alphas", cfg.alphas);
    cfg.windows = list_field<std::size_t>(doc, "windows", cfg.windows);
    cfg.epsilon = doc.value("epsilon", cfg.epsilon);
    cfg.initial = initial_selection_from_string(doc.value("initial", std::string("auto")));
    cfg.holdout = doc.value("holdout", cfg.holdout);
    cfg.ensemble_members = doc.value("ensemble_members", cfg.ensemble_members);
    const auto kernel = doc.value("kernel", std::string("linear"));
    if (kernel != "linear" && kernel != "gaussian") throw ConfigError("kernel must be linear or gaussian");
    cfg.kernel = kernel == "linear" ? KernelKind::kLinear : KernelKind::kGaussian;
    cfg.clean_threshold = doc.value("clean_threshold", cfg.clean_threshold);
    cfg.master_seed = doc.value("seed", cfg.master_seed);
    cfg.workers = doc.value("workers", cfg.workers);
    if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  json targets = json::array();
  for (const auto& t : cfg.targets) {
    targets.push_back({{"name", t.name}, {"views", t.views}, {"aggregation", to_string(t.aggregation)}});
  }
  json strategies = json::array();
  for (auto s : cfg.strategies) strategies.push_back(to_string(s));
  return {{"targets", targets},
          {"strategies", strategies},
          {"repetitions", cfg.repetitions},
          {"budgets", cfg.budgets},
          {"batches", cfg.batches},
          {"initial_batches", cfg.initial_batches},
          {"alphas", cfg.alphas},
          {"windows", cfg.windows},
          {"epsilon", cfg.epsilon},
          {"initial", to_string(cfg.initial)},
          {"holdout", cfg.holdout},
          {"ensemble_members", cfg.ensemble_members},
          {"kernel", cfg.kernel == KernelKind::kLinear ? "linear" : "gaussian"},
          {"clean_threshold", cfg.clean_threshold},
          {"seed", cfg.master_seed},
          {"workers", cfg.workers},
          {"output_dir", cfg.output_dir.generic_string()}};
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg) {
  std::vector<GridPoint> out;
  for (auto budget : cfg.budgets) {
    for (auto batch : cfg.batches) {
      for (auto initial : cfg.initial_batches) {
        for (auto alpha : cfg.alphas) {
          for (auto window : cfg.windows) out.push_back({budget, batch, initial, alpha, window});
        }
      }
    }
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t master, std::size_t target, std::size_t grid, std::size_t rep) {
  return derive_seed(master, {target, grid, rep});
}

// ---------------------------------------------------------------------------

namespace {

struct PreparedTarget {
  Target target;
  std::shared_ptr<const CleaningProblem> problem;
  std::vector<ViewResult> clean;
};

struct RunSpec {
  std::size_t run_id;
  std::size_t target;
  std::size_t grid;
  Strategy strategy;
  std::size_t rep;
};

RunResult execute_run(const RunSpec& spec, const PreparedTarget& prepared, const GridPoint& grid,
                      const ExperimentInput& input, const ExperimentConfig& cfg) {
  CleaningConfig cc;
  cc.budget = grid.budget;
  cc.batch = grid.batch;
  cc.initial_batch = grid.initial_batch;
  cc.alpha = grid.alpha;
  cc.strategy = spec.strategy;
  cc.initial = cfg.initial;
  cc.distance = {cfg.epsilon, grid.window};
  cc.seed = run_seed(cfg.master_seed, spec.target, spec.grid, spec.rep);
  cc.holdout = cfg.holdout;
  cc.ensemble_members = cfg.ensemble_members;
  cc.classifier.kernel = cfg.kernel;

  CleaningSession session(prepared.problem, cc);
  std::vector<LabeledPair> holdout;
  for (const auto& p : session.holdout()) {
    holdout.push_back({p, prepared.problem->candidates.features.learning_features(p), input.truth.is_match(p)});
  }

  RunResult result;
  result.run_id = spec.run_id;
  const bool dashboard = prepared.target.views.size() > 1;
  auto record = [&](const std::vector<ViewResult>& views) {
    MetricRow row;
    row.run_id = spec.run_id;
    row.target = prepared.target.name;
    row.strategy = spec.strategy;
    row.grid = grid;
    row.rep = spec.rep;
    row.seed = cc.seed;
    row.iteration = session.iterations();
    row.labels_used = session.labels_used();
    row.dist_to_clean = session.views_distance(views, prepared.clean);
    if (session.iterations() > 0) row.dist_to_prev = session.last_change();
    if (!holdout.empty() && session.model()) row.f1 = f1_on_holdout(*session.model(), holdout);
    if (dashboard) {
      for (std::size_t v = 0; v < views.size(); ++v) row.per_view.push_back(view_distance(views[v], prepared.clean[v]));
    }
    if (!result.rows.empty() && row.dist_to_clean > result.rows.back().dist_to_clean + 1e-12) result.monotone = false;
    if (!result.labels_to_clean && row.dist_to_clean <= cfg.clean_threshold) result.labels_to_clean = row.labels_used;
    result.rows.push_back(std::move(row));
  };

  record(session.dirty_views());
  OracleLabeler oracle(input.truth);
  while (!session.stopped()) {
    const auto requests = session.outstanding_requests();
    const auto answers = oracle.label(requests);
    std::map<PairKey, bool> labels;
    for (std::size_t i = 0; i < requests.size(); ++i) labels.emplace(requests[i].pair, answers[i]);
    session.submit(labels);
    record(session.current_views());
  }
  result.reason = session.stop_reason();
  result.labels_used = session.labels_used();
  result.rows.back().stopped = result.reason;
  return result;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10f", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : "nan"; }

}  // namespace

ExperimentResult run_experiment(const ExperimentInput& input, const ExperimentConfig& cfg, std::ostream* sink) {
  cfg.validate();
  const auto grid = expand_grid(cfg);
  const Relation clean_rel = apply_dedup(input.relation, input.truth.matches);

  ExperimentResult result;
  std::vector<PreparedTarget> prepared;
  bool any_dashboard = false;
  for (const auto& target : cfg.targets) {
    DashboardSpec dashboard;
    dashboard.aggregation = target.aggregation;
    PreparedTarget p;
    p.target = target;
    for (const auto& name : target.views) {
      auto it = input.views.find(name);
      if (it == input.views.end()) throw ConfigError("unknown view '" + name + "' for dataset '" + input.name + "'");
      dashboard.views.push_back(it->second);
      p.clean.push_back(evaluate(it->second, clean_rel));
      result.initial_distance[name] = view_distance(evaluate(it->second, input.relation), p.clean.back());
    }
    any_dashboard = any_dashboard || target.views.size() > 1;
    p.problem = make_problem(input.relation, dashboard, input.features, input.blocking, cfg.workers);
    prepared.push_back(std::move(p));
  }

  std::vector<RunSpec> specs;
  for (std::size_t t = 0; t < prepared.size(); ++t) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (auto strategy : cfg.strategies) {
        for (std::size_t r = 0; r < cfg.repetitions; ++r) specs.push_back({specs.size(), t, g, strategy, r});
      }
    }
  }

  std::vector<std::promise<RunResult>> promises(specs.size());
  std::vector<std::future<RunResult>> futures;
  for (auto& p : promises) futures.push_back(p.get_future());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        promises[i].set_value(execute_run(specs[i], prepared[specs[i].target], grid[specs[i].grid], input, cfg));
      } catch (...) {
        promises[i].set_exception(std::current_exception());
      }
    }
  };
  {
    const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.workers, specs.size()));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
    if (sink) write_metrics_header(*sink, any_dashboard);
    for (auto& f : futures) {
      RunResult run = f.get();
      if (sink) {
        for (const auto& row : run.rows) write_metric_row(*sink, row, any_dashboard);
      }
      result.runs.push_back(std::move(run));
    }
  }

  // Group runs by (target, grid point, strategy); specs are laid out with the
  // repetitions of one group contiguous.
  for (std::size_t start = 0; start < specs.size(); start += cfg.repetitions) {
    const auto& first = specs[start];
    const auto& point = grid[first.grid];
    GroupSummary group;
    group.target = prepared[first.target].target.name;
    group.strategy = first.strategy;
    group.grid = point;
    group.runs = cfg.repetitions;
    std::vector<double> to_clean;
    std::vector<double> finals;
    std::size_t monotone = 0;
    std::size_t longest = 0;
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
      const auto& run = result.runs[start + r];
      to_clean.push_back(run.labels_to_clean ? static_cast<double>(*run.labels_to_clean)
                                             : static_cast<double>(point.budget + point.batch));
      group.cleaned_runs += run.labels_to_clean.has_value();
      finals.push_back(run.rows.back().dist_to_clean);
      monotone += run.monotone;
      ++group.reasons[run.reason];
      longest = std::max(longest, run.rows.size());
    }
    group.labels_to_clean_mean = mean_of(to_clean);
    group.monotone_fraction = static_cast<double>(monotone) / static_cast<double>(cfg.repetitions);
    group.final_dist_mean = mean_of(finals);
    result.groups.push_back(group);

    for (std::size_t k = 0; k < longest; ++k) {
      std::vector<double> dist;
      std::vector<double> labels;
      std::vector<double> f1;
      for (std::size_t r = 0; r < cfg.repetitions; ++r) {
        const auto& rows = result.runs[start + r].rows;
        const auto& row = rows[std::min(k, rows.size() - 1)];
        dist.push_back(row.dist_to_clean);
        labels.push_back(static_cast<double>(row.labels_used));
        if (row.f1) f1.push_back(*row.f1);
      }
      SummaryRow s;
      s.target = group.target;
      s.strategy = group.strategy;
      s.grid = point;
      s.iteration = k;
      s.runs = cfg.repetitions;
      s.labels_mean = mean_of(labels);
      s.dist_mean = mean_of(dist);
      s.dist_stddev = stddev_of(dist);
      if (!f1.empty()) {
        s.f1_mean = mean_of(f1);
        s.f1_stddev = stddev_of(f1);
      }
      result.curve.push_back(s);
    }
  }
  return result;
}

void write_metrics_header(std::ostream& out, bool per_view) {
  out << "run_id\ttarget\tstrategy\tbudget\tbatch\tinitial_batch\talpha\twindow\trep\tseed\titeration\tlabels_used"
         "\tdist_to_clean\tdist_to_prev\tf1\tstopped";
  if (per_view) out << "\tper_view";
  out << '\n';
}

void write_metric_row(std::ostream& out, const MetricRow& row, bool per_view) {
  out << row.run_id << '\t' << row.target << '\t' << to_string(row.strategy) << '\t' << row.grid.budget << '\t'
      << row.grid.batch << '\t' << row.grid.initial_batch << '\t' << fmt(row.grid.alpha) << '\t' << row.grid.window
      << '\t' << row.rep << '\t' << row.seed << '\t' << row.iteration << '\t' << row.labels_used << '\t'
      << fmt(row.dist_to_clean) << '\t' << fmt(row.dist_to_prev) << '\t' << fmt(row.f1) << '\t'
      << (row.stopped == StopReason::kNone ? "-" : std::string(to_string(row.stopped)));
  if (per_view) {
    out << '\t';
    for (std::size_t v = 0; v < row.per_view.size(); ++v) out << (v ? ";" : "") << fmt(row.per_view[v]);
    if (row.per_view.empty()) out << '-';
  }
  out << '\n';
}

void write_summary(std::ostream& out, const ExperimentResult& result) {
  out << "target\tstrategy\tbudget\tbatch\tinitial_batch\talpha\twindow\titeration\truns\tlabels_mean"
         "\tdist_mean\tdist_stddev\tf1_mean\tf1_stddev\n";
  for (const auto& s : result.curve) {
    out << s.target << '\t' << to_string(s.strategy) << '\t' << s.grid.budget << '\t' << s.grid.batch << '\t'
        << s.grid.initial_batch << '\t' << fmt(s.grid.alpha) << '\t' << s.grid.window << '\t' << s.iteration << '\t'
        << s.runs << '\t' << fmt(s.labels_mean) << '\t' << fmt(s.dist_mean) << '\t' << fmt(s.dist_stddev) << '\t'
        << fmt(s.f1_mean) << '\t' << fmt(s.f1_stddev) << '\n';
  }
}

std::string format_summary_text(const ExperimentResult& result, const ExperimentConfig& cfg) {
  std::ostringstream out;
  char buf[256];
  out << "Initial distance to the clean view\n";
  for (const auto& [view, d] : result.initial_distance) {
    std::snprintf(buf, sizeof buf, "  %-24s %.4f\n", view.c_str(), d);
    out << buf;
  }
  out << "\nPer strategy (" << cfg.repetitions << " runs each, clean means distance <= " << cfg.clean_threshold
      << ")\n";
  for (const auto& g : result.groups) {
    std::snprintf(buf, sizeof buf,
                  "  %s %s l=%zu b=%zu bL0=%zu alpha=%.2f window=%zu: cleaned %zu/%zu, labels to clean %.1f, "
                  "final distance %.4f, monotone %.0f%%\n",
                  g.target.c_str(), std::string(to_string(g.strategy)).c_str(), g.grid.budget, g.grid.batch,
                  g.grid.initial_batch, g.grid.alpha, g.grid.window, g.cleaned_runs, g.runs,
                  g.labels_to_clean_mean, g.final_dist_mean, 100.0 * g.monotone_fraction);
    out << buf << "    stopped:";
    for (const auto& [reason, count] : g.reasons) out << ' ' << to_string(reason) << '=' << count;
    out << '\n';
  }
  out << "\nMean distance to the clean view per iteration (mean +- stddev)\n";
  for (const auto& s : result.curve) {
    std::snprintf(buf, sizeof buf, "  %s %s it=%zu labels=%.1f dist=%.4f +- %.4f", s.target.c_str(),
                  std::string(to_string(s.strategy)).c_str(), s.iteration, s.labels_mean, s.dist_mean,
                  s.dist_stddev);
    out << buf;
    if (s.f1_mean) {
      std::snprintf(buf, sizeof buf, " f1=%.3f +- %.3f", *s.f1_mean, *s.f1_stddev);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

ExperimentResult run_experiment_to_files(const ExperimentInput& input, const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) throw ConfigError("no output directory given");
  std::filesystem::create_directories(cfg.output_dir);
  const auto metrics_path = cfg.output_dir / "metrics.tsv";
  std::ofstream metrics(metrics_path);
  if (!metrics) throw DataError("cannot write '" + metrics_path.string() + "'");
  auto result = run_experiment(input, cfg, &metrics);
  std::ofstream summary(cfg.output_dir / "summary.tsv");
  write_summary(summary, result);
  std::ofstream text(cfg.output_dir / "summary.txt");
  text << format_summary_text(result, cfg);
  return result;
}

// ---------------------------------------------------------------------------

BlockingReport blocking_report(const Relation& rel, const GroundTruth& truth, const ViewSpec& spec,
                               const FeatureSpec& features, const BlockingRule& rule) {
  BlockingReport report;
  report.view = spec.name;
  auto stage = [](std::string name, std::size_t rows, std::size_t pairs, std::size_t positives) {
    BlockingStage s;
    s.name = std::move(name);
    s.rows = rows;
    s.pairs = pairs;
    s.ordered_pairs = rows < 2 ? 0 : rows * (rows - 1);
    s.positives = positives;
    s.positive_percent = pairs == 0 ? 0.0 : 100.0 * static_cast<double>(positives) / static_cast<double>(pairs);
    return s;
  };
  const std::size_t n = rel.size();
  report.stages.push_back(stage("all records", n, n < 2 ? 0 : n * (n - 1) / 2, truth.matches.size()));

  const auto prov = provenance(spec, rel);
  const PairSet pairs = build_pairs(prov);
  std::size_t view_positives = 0;
  for (const auto& p : truth.matches) view_positives += prov.contains(p.first()) && prov.contains(p.second());
  report.stages.push_back(stage("view blocking", prov.size(), pairs.size(), view_positives));

  const FeatureTable table = compute_features(rel, pairs, features);
  const PairSet blocked = apply_blocking(pairs, table, rule);
  std::size_t blocked_positives = 0;
  for (const auto& p : blocked) blocked_positives += truth.is_match(p);
  auto last = stage("view and feature blocking", prov.size(), blocked.size(), blocked_positives);
  last.ordered_pairs = 2 * blocked.size();
  report.stages.push_back(last);
  return report;
}

std::string format_blocking_report(const BlockingReport& report) {
  std::ostringstream out;
  char buf[256];
  out << "view: " << report.view << '\n';
  std::snprintf(buf, sizeof buf, "%-28s %8s %14s %14s %10s %9s\n", "stage", "rows", "pairs", "ordered", "positives",
                "pos %");
  out << buf;
  for (const auto& s : report.stages) {
    std::snprintf(buf, sizeof buf, "%-28s %8zu %14zu %14zu %10zu %9.3f\n", s.name.c_str(), s.rows, s.pairs,
                  s.ordered_pairs, s.positives, s.positive_percent);
    out << buf;
  }
  return out.str();
}

}  // namespace viewclean
