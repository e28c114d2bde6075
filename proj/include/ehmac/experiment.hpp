#pragma once

#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ehmac/central_policy.hpp"
#include "ehmac/config.hpp"
#include "ehmac/mdp.hpp"
#include "ehmac/metrics.hpp"
#include "ehmac/mfg.hpp"

namespace ehmac {

// Experiment pipelines. Every artifact is produced as an in-memory string
// keyed by file name, so a (config, seed) pair maps to identical bytes no
// matter where or when it runs.

struct ScenarioResult {
  std::vector<MetricsRecord> records;
  std::map<std::string, std::string> artifacts;  // file name -> contents
};

namespace detail {

inline double offline_reference_rps(const ExperimentConfig& cfg, std::uint64_t seed,
                                    std::size_t instances) {
  Rng rng(seed);
  double total = 0.0;
  std::size_t solved = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng sub = rng.substream(i);
    const OfflineInstance inst =
        random_instance(cfg.offline.horizon, cfg.models(), cfg.system, sub);
    const OfflineSolution sol = solve_offline(inst, cfg.solver);
    total += sol.objective_per_slot;
    ++solved;
  }
  return total / static_cast<double>(solved);
}

inline CentralTrainResult train_central_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng data_rng(mix_seed(seed, 0xda7a));
  const Dataset ds = generate_dataset(cfg.offline.instances, cfg.offline.horizon, cfg.models(),
                                      cfg.system, data_rng, cfg.solver);
  TrainingConfig tc = cfg.training.config;
  tc.shuffle_seed = mix_seed(seed, 0x7ea1);
  return train_central(ds, cfg.system, tc, cfg.training.validation_fraction,
                       cfg.training.hidden_layers);
}

inline double eval_central(const CentralPolicy& policy, const ExperimentConfig& cfg,
                           std::uint64_t seed) {
  const Actor actor = [&policy](const JointState& js) { return act_central(policy, js); };
  return evaluate_policy(actor, cfg.models(), cfg.system, cfg.eval_slots,
                         mix_seed(seed, 0xe7a1));
}

inline MetricsRecord base_record(const ExperimentConfig& cfg, std::uint64_t seed) {
  MetricsRecord r;
  r.scenario = cfg.scenario;
  r.harvest_mean = cfg.harvest.mean;
  r.harvest_variance = cfg.harvest.variance;
  r.num_nodes = cfg.system.num_nodes;
  r.seed = seed;
  return r;
}

// Per-slot run history: slot, iteration, realized rate, belief drift of the
// iteration the slot belongs to, exploration epsilon, reward mode.
inline std::string history_csv(const MFMARLResult& res, const DQNConfig& dqn,
                               const char* mode) {
  std::ostringstream out;
  out << "slot,iteration,rps_nats,belief_drift_l2,epsilon,reward_mode\n";
  char buf[96];
  long slot = 0;
  double eps = dqn.eps_max;
  for (const IterationMetrics& it : res.iterations) {
    for (long n = 0; n < it.slots_used; ++n, ++slot) {
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g,%.17g,", slot, it.m,
                    res.rps_history[static_cast<std::size_t>(slot)], it.belief_drift, eps);
      out << buf << mode << '\n';
      eps = std::max(dqn.eps_min, eps * dqn.eps_decay);
    }
  }
  return out.str();
}

}  // namespace detail

inline MFMARLResult run_marl_pipeline(const ExperimentConfig& cfg, RewardMode mode,
                                      std::uint64_t seed) {
  const StateGrid grid = make_grid(cfg);
  const MLPArchitecture q_arch = build_q_arch(cfg.system.action_grid.size(),
                                              cfg.dqn.hidden_layers, cfg.dqn.first_hidden,
                                              cfg.dqn.shrink);
  MFMARLConfig mc = cfg.mfmarl;
  mc.reward_mode = mode;
  DQNConfig dq = cfg.dqn.config;
  dq.state_scale = derive_state_scale(cfg.models(), cfg.system);
  return run_mfmarl(cfg.models(), cfg.system, grid, dq, q_arch, mc, mix_seed(seed, 0x3f9a));
}

inline ScenarioResult run_scenario(const ExperimentConfig& cfg) {
  cfg.validate();
  ScenarioResult out;
  for (const std::uint64_t seed : cfg.seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (cfg.pipeline == "offline") {
      const double rps =
          detail::offline_reference_rps(cfg, mix_seed(seed, 0x0ff1), cfg.offline.eval_instances);
      MetricsRecord r = detail::base_record(cfg, seed);
      r.method = "offline";
      r.rps = rps;
      r.percent_of_reference = 100.0;
      r.wall_time_s = elapsed();
      out.records.push_back(r);
      continue;
    }

    if (cfg.pipeline == "mdp") {
      if (cfg.system.num_nodes != 1)
        throw std::invalid_argument("run_scenario: mdp pipeline requires K=1");
      const double offline_rps =
          detail::offline_reference_rps(cfg, mix_seed(seed, 0x0ff1), cfg.offline.eval_instances);
      const StateGrid grid = make_grid(cfg);
      const TabularMDP mdp = build_p2p_mdp(cfg.harvest, cfg.channel, cfg.system, grid,
                                           cfg.mdp_action_set, cfg.mdp_gamma);
      const ValueTable vt = value_iteration(mdp, 1e-6);
      const double rps = evaluate_mdp_policy(vt, grid, cfg.mdp_action_set, cfg.models(),
                                             cfg.system, cfg.eval_slots, mix_seed(seed, 0xed9));
      MetricsRecord ref = detail::base_record(cfg, seed);
      ref.method = "offline";
      ref.rps = offline_rps;
      ref.percent_of_reference = 100.0;
      ref.wall_time_s = elapsed();
      out.records.push_back(ref);
      MetricsRecord r = detail::base_record(cfg, seed);
      r.method = "mdp";
      r.rps = rps;
      r.percent_of_reference = 100.0 * rps / offline_rps;
      r.wall_time_s = elapsed();
      out.records.push_back(r);
      continue;
    }

    // Remaining pipelines all train the centralized net first.
    const CentralTrainResult central = detail::train_central_for(cfg, seed);
    const double central_rps = detail::eval_central(central.policy, cfg, seed);

    if (cfg.pipeline == "central") {
      const double offline_rps =
          detail::offline_reference_rps(cfg, mix_seed(seed, 0x0ff1), cfg.offline.eval_instances);
      MetricsRecord ref = detail::base_record(cfg, seed);
      ref.method = "offline";
      ref.rps = offline_rps;
      ref.percent_of_reference = 100.0;
      ref.wall_time_s = elapsed();
      out.records.push_back(ref);
      MetricsRecord r = detail::base_record(cfg, seed);
      r.method = "central-dnn";
      r.rps = central_rps;
      r.percent_of_reference = 100.0 * central_rps / offline_rps;
      r.wall_time_s = elapsed();
      out.records.push_back(r);
      continue;
    }

    MetricsRecord central_rec = detail::base_record(cfg, seed);
    central_rec.method = "central-dnn";
    central_rec.rps = central_rps;
    central_rec.percent_of_reference = 100.0;
    central_rec.wall_time_s = elapsed();

    if (cfg.pipeline == "mfmarl" || cfg.pipeline == "coop") {
      const bool coop = cfg.pipeline == "coop";
      const RewardMode mode = coop ? RewardMode::kApBroadcast : RewardMode::kMeanFieldEstimate;
      const MFMARLResult res = run_marl_pipeline(cfg, mode, seed);
      out.records.push_back(central_rec);
      MetricsRecord r = detail::base_record(cfg, seed);
      r.method = coop ? "coop-q" : "mfmarl";
      r.rps = res.eval_rps;
      r.percent_of_reference = 100.0 * res.eval_rps / central_rps;
      r.wall_time_s = elapsed();
      out.records.push_back(r);
      out.artifacts[cfg.scenario + "_" + r.method + "_seed" + std::to_string(seed) +
                    "_history.csv"] =
          detail::history_csv(res, cfg.dqn.config,
                              coop ? "ap-broadcast" : "mean-field-estimate");
      continue;
    }

    if (cfg.pipeline == "dist-dnn") {
      const StateGrid grid = make_grid(cfg);
      const DistDNNResult res =
          run_distributed_dnn(cfg.models(), cfg.system, grid, central.policy,
                              cfg.dist_broadcast_period, cfg.dist_total_slots,
                              mix_seed(seed, 0xd1d0));
      out.records.push_back(central_rec);
      MetricsRecord r = detail::base_record(cfg, seed);
      r.method = "dist-dnn";
      r.rps = res.eval_rps;
      r.percent_of_reference = 100.0 * res.eval_rps / central_rps;
      r.wall_time_s = elapsed();
      out.records.push_back(r);
      continue;
    }

    throw std::invalid_argument("run_scenario: unknown pipeline " + cfg.pipeline);
  }
  return out;
}

// Sets a dotted path like "harvest.mean" inside a config JSON.
inline void apply_axis_value(nlohmann::json& j, const std::string& path,
                             const nlohmann::json& value) {
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct SweepResult {
  std::vector<MetricsRecord> records;
  std::map<std::string, std::string> artifacts;
};

// Cartesian expansion over one axis; per-(value, method) aggregation across
// seeds lands in a summary artifact.
inline SweepResult sweep(const nlohmann::json& config_template, const std::string& axis_path,
                         const std::vector<double>& values) {
  SweepResult out;
  std::ostringstream summary;
  summary << "axis,value,method,mean_rps_nats,stddev_rps_nats,num_seeds\n";
  char buf[96];
  for (const double v : values) {
    nlohmann::json patched = config_template;
    apply_axis_value(patched, axis_path, v);
    const ExperimentConfig cfg = parse_experiment_config(patched);
    ScenarioResult res = run_scenario(cfg);
    std::map<std::string, std::vector<double>> by_method;
    for (const auto& r : res.records) by_method[r.method].push_back(r.rps);
    for (auto& [name, content] : res.artifacts) out.artifacts[name] = std::move(content);
    for (const auto& r : res.records) out.records.push_back(r);
    for (const auto& [method, rps] : by_method) {
      double mean = 0.0;
      for (double x : rps) mean += x;
      mean /= static_cast<double>(rps.size());
      double var = 0.0;
      for (double x : rps) var += (x - mean) * (x - mean);
      const double sd = rps.size() > 1 ? std::sqrt(var / static_cast<double>(rps.size() - 1))
                                       : 0.0;
      std::snprintf(buf, sizeof buf, ",%.17g,", v);
      summary << axis_path << buf << method;
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%zu\n", mean, sd, rps.size());
      summary << buf;
    }
  }
  out.artifacts["sweep_summary.csv"] = summary.str();
  return out;
}

}  // namespace ehmac
