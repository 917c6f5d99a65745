#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "viewclean/experiment.hpp"
#include "viewclean/service.hpp"
#include "viewclean/view_distance.hpp"

using namespace viewclean;
using nlohmann::json;

namespace {

struct InputFlags {
  std::string dataset;
  bool synthetic = false;
  SyntheticOptions synth;
};

void add_input_flags(CLI::App* cmd, InputFlags& f) {
  cmd->add_option("--dataset", f.dataset, "Dataset manifest (JSON)");
  cmd->add_flag("--synthetic", f.synthetic, "Use generated data instead of a manifest");
  cmd->add_option("--n", f.synth.n, "Synthetic base entities");
  cmd->add_option("--dup-rate", f.synth.dup_rate, "Synthetic duplicate rate");
  cmd->add_option("--noise", f.synth.noise, "Synthetic perturbation");
  cmd->add_option("--data-seed", f.synth.seed, "Synthetic generator seed");
}

ExperimentInput load_input(const InputFlags& f) {
  if (f.synthetic == !f.dataset.empty()) throw ConfigError("give exactly one of --dataset or --synthetic");
  if (f.synthetic) return synthetic_input(f.synth);
  auto dataset = load_dataset(load_manifest(f.dataset));
  for (const auto& w : dataset.warnings) std::cerr << "warning: " << w << '\n';
  return input_from_dataset(dataset);
}

const ViewSpec& pick_view(const ExperimentInput& input, const std::string& name) {
  if (name.empty() && input.views.size() == 1) return input.views.begin()->second;
  auto it = input.views.find(name);
  if (it == input.views.end()) {
    std::string known;
    for (const auto& [v, _] : input.views) known += (known.empty() ? "" : ", ") + v;
    throw ConfigError("unknown view '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("'" + path + "' is not valid JSON");
  return doc;
}

httplib::Server* active_server = nullptr;

void on_signal(int) {
  if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"View-driven duplicate cleaning"};
  app.require_subcommand(1);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Repeated seeded cleaning runs with the oracle labeler");
  InputFlags exp_in;
  add_input_flags(exp, exp_in);
  std::string config_path;
  std::vector<std::string> views;
  std::vector<std::string> strategies;
  std::string aggregation = "max";
  bool dashboard = false;
  ExperimentConfig flags;
  std::string out_dir;
  std::string initial;
  std::string kernel;
  exp->add_option("--config", config_path, "Experiment config (JSON); flags override it");
  exp->add_option("--views", views, "Views to clean, one target each");
  exp->add_flag("--dashboard", dashboard, "Clean the --views together as one dashboard");
  exp->add_option("--aggregation", aggregation, "Dashboard impact aggregation: max or sum");
  exp->add_option("--strategies", strategies, "view_impact hybrid uncertainty entropy random round_robin");
  auto* o_reps = exp->add_option("--repetitions", flags.repetitions);
  auto* o_budget = exp->add_option("--budgets", flags.budgets);
  auto* o_batch = exp->add_option("--batches", flags.batches);
  auto* o_initial = exp->add_option("--initial-batches", flags.initial_batches);
  auto* o_alpha = exp->add_option("--alphas", flags.alphas);
  auto* o_window = exp->add_option("--windows", flags.windows);
  auto* o_eps = exp->add_option("--epsilon", flags.epsilon);
  auto* o_threshold = exp->add_option("--clean-threshold", flags.clean_threshold);
  auto* o_seed = exp->add_option("--seed", flags.master_seed, "Master seed");
  auto* o_workers = exp->add_option("--workers", flags.workers);
  auto* o_members = exp->add_option("--ensemble-members", flags.ensemble_members);
  auto* o_holdout = exp->add_flag("--holdout", flags.holdout, "Hold out half the candidates to report F1");
  exp->add_option("--initial", initial, "auto bias random round_robin");
  exp->add_option("--kernel", kernel, "linear or gaussian");
  exp->add_option("--out", out_dir, "Output directory");

  // blocking-report
  auto* blk = app.add_subcommand("blocking-report", "Row, pair and positive counts per blocking stage");
  InputFlags blk_in;
  add_input_flags(blk, blk_in);
  std::string blk_view;
  bool no_rule = false;
  blk->add_option("--view", blk_view);
  blk->add_flag("--no-rule", no_rule, "Skip feature blocking");

  // impact
  auto* imp = app.add_subcommand("impact", "Per-tuple view impact as id/score lines");
  InputFlags imp_in;
  add_input_flags(imp, imp_in);
  std::string imp_view;
  std::size_t imp_workers = 0;
  imp->add_option("--view", imp_view);
  imp->add_option("--workers", imp_workers);

  // emd
  auto* emd = app.add_subcommand("emd", "Distance between two stored view results");
  std::string emd_a, emd_b;
  bool emd_flows = false;
  emd->add_option("from", emd_a)->required();
  emd->add_option("to", emd_b)->required();
  emd->add_flag("--flows", emd_flows, "Print tuple distances and the optimal flow");

  // synth
  auto* syn = app.add_subcommand("synth", "Write a synthetic dataset with its manifest");
  SyntheticOptions syn_opts;
  std::string syn_out;
  syn->add_option("--out", syn_out)->required();
  syn->add_option("--n", syn_opts.n);
  syn->add_option("--dup-rate", syn_opts.dup_rate);
  syn->add_option("--noise", syn_opts.noise);
  syn->add_option("--seed", syn_opts.seed);

  // serve
  auto* srv = app.add_subcommand("serve", "Run the labeling session service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  bool srv_synthetic = false;
  srv->add_option("--host", host)->envname("VIEWCLEAN_HOST");
  srv->add_option("--port", port)->envname("VIEWCLEAN_PORT");
  srv->add_option("--data-dir", data_dir, "Holds datasets/*.json and sessions/")->envname("VIEWCLEAN_DATA_DIR");
  srv->add_flag("--synthetic", srv_synthetic, "Also register a generated dataset named 'synthetic'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*exp) {
      ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : experiment_config_from_json(read_json(config_path));
      if (!views.empty()) {
        cfg.targets.clear();
        if (dashboard) {
          std::string name;
          for (const auto& v : views) name += (name.empty() ? "" : "+") + v;
          cfg.targets.push_back({name, views, aggregation_from_string(aggregation)});
        } else {
          for (const auto& v : views) cfg.targets.push_back({v, {v}, Aggregation::kMax});
        }
      }
      if (!strategies.empty()) {
        cfg.strategies.clear();
        for (const auto& s : strategies) cfg.strategies.push_back(strategy_from_string(s));
      }
      if (*o_reps) cfg.repetitions = flags.repetitions;
      if (*o_budget) cfg.budgets = flags.budgets;
      if (*o_batch) cfg.batches = flags.batches;
      if (*o_initial) cfg.initial_batches = flags.initial_batches;
      if (*o_alpha) cfg.alphas = flags.alphas;
      if (*o_window) cfg.windows = flags.windows;
      if (*o_eps) cfg.epsilon = flags.epsilon;
      if (*o_threshold) cfg.clean_threshold = flags.clean_threshold;
      if (*o_seed) cfg.master_seed = flags.master_seed;
      if (*o_workers) cfg.workers = flags.workers;
      if (*o_members) cfg.ensemble_members = flags.ensemble_members;
      if (*o_holdout) cfg.holdout = flags.holdout;
      if (!initial.empty()) cfg.initial = initial_selection_from_string(initial);
      if (!kernel.empty()) {
        if (kernel != "linear" && kernel != "gaussian") throw ConfigError("kernel must be linear or gaussian");
        cfg.kernel = kernel == "linear" ? KernelKind::kLinear : KernelKind::kGaussian;
      }
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const auto input = load_input(exp_in);
      if (cfg.targets.empty() && input.views.size() == 1) {
        const auto& name = input.views.begin()->first;
        cfg.targets.push_back({name, {name}, Aggregation::kMax});
      }
      cfg.validate();
      if (cfg.output_dir.empty()) {
        const auto result = run_experiment(input, cfg, &std::cout);
        std::cerr << format_summary_text(result, cfg);
      } else {
        const auto result = run_experiment_to_files(input, cfg);
        std::ofstream(cfg.output_dir / "config.json") << experiment_config_to_json(cfg).dump(2) << '\n';
        std::cout << format_summary_text(result, cfg);
      }
    } else if (*blk) {
      const auto input = load_input(blk_in);
      const auto& spec = pick_view(input, blk_view);
      const auto rule = no_rule ? BlockingRule::none() : input.blocking;
      std::cout << format_blocking_report(blocking_report(input.relation, input.truth, spec, input.features, rule));
    } else if (*imp) {
      const auto input = load_input(imp_in);
      const auto table = view_impact_scores(pick_view(input, imp_view), input.relation, imp_workers);
      for (const auto& [id, score] : table) std::printf("%u\t%.10f\n", id, score);
    } else if (*emd) {
      const auto a = load_view_result(emd_a);
      const auto b = load_view_result(emd_b);
      const auto r = view_emd(a, b);
      std::printf("%.10f\n", r.distance);
      if (emd_flows) {
        for (std::size_t i = 0; i < r.flow.size(); ++i) {
          for (std::size_t j = 0; j < r.flow[i].size(); ++j) {
            std::printf("%zu\t%zu\t%.6f\t%.6f\n", i, j, r.ground[i][j], r.flow[i][j]);
          }
        }
      }
    } else if (*syn) {
      const auto manifest = write_synthetic_dataset(syn_out, generate_synthetic(syn_opts));
      std::cout << manifest.string() << '\n';
    } else if (*srv) {
      SessionManager manager({data_dir, 0});
      for (const auto& msg : manager.load_datasets()) std::cerr << "skipped dataset " << msg << '\n';
      if (srv_synthetic) manager.register_dataset(synthetic_input({}));
      const auto restored = manager.restore();
      httplib::Server server;
      install_routes(server, manager);
      active_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "datasets:";
      for (const auto& d : manager.dataset_names()) std::cerr << ' ' << d;
      std::cerr << "\nrestored sessions: " << restored << "\nlistening on " << host << ':' << port << std::endl;
      if (!server.listen(host, port)) throw DataError("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
