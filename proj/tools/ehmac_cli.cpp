// Command-line driver for the energy-harvesting MAC experiments: offline
// benchmark generation, centralized training and evaluation, the
// fictitious-play MARL runs, the distributed-DNN policy, the tabular MDP
// baseline, and parameter sweeps.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ehmac/ehmac.hpp"

namespace fs = std::filesystem;
using namespace ehmac;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string scenario;
  long seed = -1;
  bool timing = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
  cmd->add_option("--scenario", opts.scenario, "scenario name (overrides config)");
  cmd->add_option("--seed", opts.seed, "single seed (overrides config seed list)");
  cmd->add_flag("--timing", opts.timing, "include wall-clock times in outputs");
}

ExperimentConfig load_config(const CommonOpts& opts, const std::string& forced_pipeline) {
  ExperimentConfig cfg = load_experiment_config(opts.config_path);
  if (!forced_pipeline.empty()) cfg.pipeline = forced_pipeline;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.scenario.empty()) cfg.scenario = opts.scenario;
  if (opts.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
  return cfg;
}

void write_outputs(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records,
                   const std::map<std::string, std::string>& artifacts, bool timing) {
  fs::create_directories(cfg.out_dir);
  emit_csv(records, cfg.out_dir + "/metrics.csv", timing);
  emit_json(records, cfg.out_dir + "/metrics.json", timing);
  for (const auto& [name, content] : artifacts) {
    std::ofstream out(cfg.out_dir + "/" + name);
    out << content;
  }
  for (const auto& r : records)
    std::cout << r.scenario << ' ' << r.method << " seed=" << r.seed << " rps=" << r.rps
              << " pct=" << r.percent_of_reference << '\n';
}

int run_pipeline(const CommonOpts& opts, const std::string& pipeline) {
  const ExperimentConfig cfg = load_config(opts, pipeline);
  const ScenarioResult res = run_scenario(cfg);
  write_outputs(cfg, res.records, res.artifacts, opts.timing);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power control experiments on a fading energy-harvesting MAC"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string dataset_path, checkpoint_path, axis_path;
  std::vector<double> axis_values;

  auto* offline_gen = app.add_subcommand(
      "offline-gen", "solve offline instances, write the training dataset and benchmark RPS");
  add_common(offline_gen, opts);
  offline_gen->add_option("--dataset", dataset_path, "dataset CSV path to write");

  auto* train_cmd =
      app.add_subcommand("train-central", "train the centralized net on a dataset");
  add_common(train_cmd, opts);
  train_cmd->add_option("--dataset", dataset_path, "dataset CSV (defaults to fresh data)");
  train_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON path to write");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a central-policy checkpoint");
  add_common(eval_cmd, opts);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON to load")->required();

  auto* mfmarl_cmd = app.add_subcommand("run-mfmarl", "fictitious-play MARL training run");
  add_common(mfmarl_cmd, opts);
  auto* coop_cmd = app.add_subcommand("run-coop", "cooperative-Q variant (AP broadcasts reward)");
  add_common(coop_cmd, opts);
  auto* dist_cmd = app.add_subcommand("run-dist-dnn", "distributed DNN inference run");
  add_common(dist_cmd, opts);
  auto* mdp_cmd = app.add_subcommand("baseline-mdp", "tabular MDP baseline (K=1)");
  add_common(mdp_cmd, opts);

  auto* sweep_cmd = app.add_subcommand("sweep", "expand one config axis and aggregate");
  add_common(sweep_cmd, opts);
  sweep_cmd->add_option("--axis", axis_path, "dotted config path, e.g. harvest.mean")
      ->required();
  sweep_cmd->add_option("--values", axis_values, "axis values")->required()->expected(-1);

  CLI11_PARSE(app, argc, argv);

  std::string stage = "setup";
  try {
    if (offline_gen->parsed()) {
      stage = "offline-gen";
      ExperimentConfig cfg = load_config(opts, "offline");
      if (!dataset_path.empty()) {
        Rng rng(mix_seed(cfg.seeds.front(), 0xda7a));
        const Dataset ds = generate_dataset(cfg.offline.instances, cfg.offline.horizon,
                                            cfg.models(), cfg.system, rng, cfg.solver);
        fs::create_directories(fs::path(dataset_path).parent_path().string().empty()
                                   ? "."
                                   : fs::path(dataset_path).parent_path().string());
        save_dataset(ds, dataset_path);
        std::cout << "dataset: " << ds.records.size() << " records -> " << dataset_path << '\n';
      }
      const ScenarioResult res = run_scenario(cfg);
      write_outputs(cfg, res.records, res.artifacts, opts.timing);
      return 0;
    }
    if (train_cmd->parsed()) {
      stage = "train-central";
      ExperimentConfig cfg = load_config(opts, "central");
      CentralTrainResult result;
      if (!dataset_path.empty()) {
        const Dataset ds = load_dataset(dataset_path);
        TrainingConfig tc = cfg.training.config;
        tc.shuffle_seed = mix_seed(cfg.seeds.front(), 0x7ea1);
        result = train_central(ds, cfg.system, tc, cfg.training.validation_fraction,
                               cfg.training.hidden_layers);
      } else {
        result = detail::train_central_for(cfg, cfg.seeds.front());
      }
      std::cout << "validation mse: " << result.val_mse
                << " (target variance " << result.target_variance << ")\n";
      if (!checkpoint_path.empty()) {
        save_central_policy(result.policy, checkpoint_path);
        std::cout << "checkpoint -> " << checkpoint_path << '\n';
      }
      return 0;
    }
    if (eval_cmd->parsed()) {
      stage = "eval";
      ExperimentConfig cfg = load_config(opts, "central");
      const CentralPolicy policy = load_central_policy(checkpoint_path);
      std::vector<MetricsRecord> records;
      for (const std::uint64_t seed : cfg.seeds) {
        const double rps = detail::eval_central(policy, cfg, seed);
        MetricsRecord r = detail::base_record(cfg, seed);
        r.method = "central-dnn";
        r.rps = rps;
        r.percent_of_reference = 100.0;
        records.push_back(r);
      }
      write_outputs(cfg, records, {}, opts.timing);
      return 0;
    }
    if (mfmarl_cmd->parsed()) return (stage = "run-mfmarl", run_pipeline(opts, "mfmarl"));
    if (coop_cmd->parsed()) return (stage = "run-coop", run_pipeline(opts, "coop"));
    if (dist_cmd->parsed()) return (stage = "run-dist-dnn", run_pipeline(opts, "dist-dnn"));
    if (mdp_cmd->parsed()) return (stage = "baseline-mdp", run_pipeline(opts, "mdp"));
    if (sweep_cmd->parsed()) {
      stage = "sweep";
      std::ifstream in(opts.config_path);
      if (!in) throw std::runtime_error("cannot open " + opts.config_path);
      nlohmann::json tmpl;
      in >> tmpl;
      if (!opts.out_dir.empty()) tmpl["out_dir"] = opts.out_dir;
      if (!opts.scenario.empty()) tmpl["scenario"] = opts.scenario;
      if (opts.seed >= 0) tmpl["seeds"] = {opts.seed};
      const SweepResult res = sweep(tmpl, axis_path, axis_values);
      const ExperimentConfig cfg = parse_experiment_config(tmpl);
      write_outputs(cfg, res.records, res.artifacts, opts.timing);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "[stage:" << stage << "] error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "[stage:parse] error: no subcommand\n";
  return 2;
}
