#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehmac/dqn.hpp"
#include "ehmac/env.hpp"
#include "ehmac/mfg.hpp"
#include "ehmac/mlp.hpp"
#include "ehmac/offline.hpp"
#include "ehmac/statespace.hpp"

namespace ehmac {

// Experiment configuration: strict JSON (unknown keys rejected) with units
// spelled out in the field names. Energies are in units of 1e-2 J.

struct GridSpec {
  std::size_t battery_bins = 10;
  std::size_t gain_bins = 8;
  std::size_t harvest_bins = 8;
};

struct OfflineSpec {
  std::size_t instances = 200;
  std::size_t eval_instances = 100;  // fresh instances for the benchmark RPS
  std::size_t horizon = 20;          // N
};

struct TrainingSpec {
  TrainingConfig config;
  double validation_fraction = 0.2;
  std::size_t hidden_layers = 6;
};

struct DQNSpec {
  DQNConfig config;
  std::size_t hidden_layers = 10;
  std::size_t first_hidden = 60;
  std::size_t shrink = 2;
};

struct ExperimentConfig {
  std::string scenario = "unnamed";
  std::string pipeline = "offline";  // offline|central|mfmarl|coop|dist-dnn|mdp
  SystemConfig system;
  HarvestModel harvest;
  ChannelModel channel;
  GridSpec grid;
  SolverSettings solver;
  OfflineSpec offline;
  TrainingSpec training;
  DQNSpec dqn;
  MFMARLConfig mfmarl;
  long eval_slots = 100000;
  long dist_broadcast_period = 1000;
  long dist_total_slots = 20000;
  std::vector<double> mdp_action_set;  // defaults to integer steps up to P_max
  double mdp_gamma = 0.99;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out";

  EnvModels models() const { return EnvModels{harvest, channel}; }

  void validate() const {
    system.validate();
    harvest.validate();
    channel.validate();
    mfmarl.validate();
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seed list empty");
    if (eval_slots < 1) throw std::invalid_argument("ExperimentConfig: eval_slots >= 1");
  }
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& where) {
  if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw std::runtime_error("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::maybe;
  using detail::require_keys;
  require_keys(j, {"scenario", "pipeline", "system", "harvest", "channel", "grid", "solver",
                   "offline", "training", "dqn", "mfmarl", "eval_slots",
                   "dist_broadcast_period", "dist_total_slots", "mdp_action_set", "mdp_gamma",
                   "seeds", "out_dir"},
               "top level");
  ExperimentConfig cfg;
  maybe(j, "scenario", cfg.scenario);
  maybe(j, "pipeline", cfg.pipeline);

  if (j.contains("system")) {
    const auto& s = j.at("system");
    require_keys(s, {"num_nodes", "battery_capacity", "max_transmit", "action_grid",
                     "action_levels", "power_scaling_enabled", "initial_battery"},
                 "system");
    maybe(s, "num_nodes", cfg.system.num_nodes);
    maybe(s, "battery_capacity", cfg.system.battery_capacity);
    maybe(s, "max_transmit", cfg.system.max_transmit);
    maybe(s, "power_scaling_enabled", cfg.system.power_scaling_enabled);
    cfg.system.initial_battery = cfg.system.battery_capacity / 2.0;
    maybe(s, "initial_battery", cfg.system.initial_battery);
    if (s.contains("action_grid"))
      cfg.system.action_grid = s.at("action_grid").get<std::vector<double>>();
    else if (s.contains("action_levels"))
      cfg.system.action_grid =
          uniform_action_grid(cfg.system.max_transmit, s.at("action_levels").get<std::size_t>());
  }
  if (cfg.system.action_grid.empty())
    cfg.system.action_grid = uniform_action_grid(cfg.system.max_transmit, 31);

  if (j.contains("harvest")) {
    const auto& h = j.at("harvest");
    require_keys(h, {"mean", "variance", "truncation_mode"}, "harvest");
    maybe(h, "mean", cfg.harvest.mean);
    maybe(h, "variance", cfg.harvest.variance);
    if (h.contains("truncation_mode")) {
      const std::string mode = h.at("truncation_mode").get<std::string>();
      if (mode == "reject-renormalize")
        cfg.harvest.truncation_mode = TruncationMode::kRejectRenormalize;
      else if (mode == "clip-at-zero")
        cfg.harvest.truncation_mode = TruncationMode::kClipAtZero;
      else
        throw std::runtime_error("config: unknown truncation_mode " + mode);
    }
  }

  if (j.contains("channel")) {
    const auto& c = j.at("channel");
    require_keys(c, {"family", "levels", "weights"}, "channel");
    if (c.contains("family")) {
      const std::string fam = c.at("family").get<std::string>();
      if (fam == "rayleigh-power-gain")
        cfg.channel.family = ChannelFamily::kRayleighPowerGain;
      else if (fam == "discrete-levels")
        cfg.channel.family = ChannelFamily::kDiscreteLevels;
      else
        throw std::runtime_error("config: unknown channel family " + fam);
    }
    maybe(c, "levels", cfg.channel.level_set);
    maybe(c, "weights", cfg.channel.weights);
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    require_keys(g, {"battery_bins", "gain_bins", "harvest_bins"}, "grid");
    maybe(g, "battery_bins", cfg.grid.battery_bins);
    maybe(g, "gain_bins", cfg.grid.gain_bins);
    maybe(g, "harvest_bins", cfg.grid.harvest_bins);
  }

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    require_keys(s, {"tol", "max_iters"}, "solver");
    maybe(s, "tol", cfg.solver.tol);
    maybe(s, "max_iters", cfg.solver.max_iters);
  }

  if (j.contains("offline")) {
    const auto& o = j.at("offline");
    require_keys(o, {"instances", "eval_instances", "horizon"}, "offline");
    maybe(o, "instances", cfg.offline.instances);
    maybe(o, "eval_instances", cfg.offline.eval_instances);
    maybe(o, "horizon", cfg.offline.horizon);
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    require_keys(t, {"optimizer", "learning_rate", "batch_size", "epochs", "shuffle_seed",
                     "validation_fraction", "hidden_layers"},
                 "training");
    if (t.contains("optimizer")) {
      const std::string opt = t.at("optimizer").get<std::string>();
      if (opt == "adam") cfg.training.config.optimizer = OptimizerKind::kAdam;
      else if (opt == "sgd") cfg.training.config.optimizer = OptimizerKind::kSgd;
      else throw std::runtime_error("config: unknown optimizer " + opt);
    }
    maybe(t, "learning_rate", cfg.training.config.learning_rate);
    maybe(t, "batch_size", cfg.training.config.batch_size);
    maybe(t, "epochs", cfg.training.config.epochs);
    maybe(t, "shuffle_seed", cfg.training.config.shuffle_seed);
    maybe(t, "validation_fraction", cfg.training.validation_fraction);
    maybe(t, "hidden_layers", cfg.training.hidden_layers);
  }

  if (j.contains("dqn")) {
    const auto& d = j.at("dqn");
    require_keys(d, {"gamma", "eps_max", "eps_min", "eps_decay", "batch_size",
                     "target_sync_period", "learning_rate", "replay_capacity", "hidden_layers",
                     "first_hidden", "shrink"},
                 "dqn");
    maybe(d, "gamma", cfg.dqn.config.gamma);
    maybe(d, "eps_max", cfg.dqn.config.eps_max);
    maybe(d, "eps_min", cfg.dqn.config.eps_min);
    maybe(d, "eps_decay", cfg.dqn.config.eps_decay);
    maybe(d, "batch_size", cfg.dqn.config.batch_size);
    maybe(d, "target_sync_period", cfg.dqn.config.target_sync_period);
    maybe(d, "learning_rate", cfg.dqn.config.learning_rate);
    maybe(d, "replay_capacity", cfg.dqn.config.replay_capacity);
    maybe(d, "hidden_layers", cfg.dqn.hidden_layers);
    maybe(d, "first_hidden", cfg.dqn.first_hidden);
    maybe(d, "shrink", cfg.dqn.shrink);
  }

  if (j.contains("mfmarl")) {
    const auto& m = j.at("mfmarl");
    require_keys(m, {"drift_threshold", "outer_tolerance", "max_iteration_slots", "reward_mode",
                     "min_estimation_slots", "max_iterations", "max_total_slots",
                     "min_total_slots", "eval_slots"},
                 "mfmarl");
    maybe(m, "drift_threshold", cfg.mfmarl.drift_threshold);
    maybe(m, "outer_tolerance", cfg.mfmarl.outer_tolerance);
    maybe(m, "max_iteration_slots", cfg.mfmarl.max_iteration_slots);
    maybe(m, "min_estimation_slots", cfg.mfmarl.min_estimation_slots);
    maybe(m, "max_iterations", cfg.mfmarl.max_iterations);
    maybe(m, "max_total_slots", cfg.mfmarl.max_total_slots);
    maybe(m, "min_total_slots", cfg.mfmarl.min_total_slots);
    maybe(m, "eval_slots", cfg.mfmarl.eval_slots);
    if (m.contains("reward_mode")) {
      const std::string mode = m.at("reward_mode").get<std::string>();
      if (mode == "mean-field-estimate")
        cfg.mfmarl.reward_mode = RewardMode::kMeanFieldEstimate;
      else if (mode == "ap-broadcast")
        cfg.mfmarl.reward_mode = RewardMode::kApBroadcast;
      else
        throw std::runtime_error("config: unknown reward_mode " + mode);
    }
  }

  maybe(j, "eval_slots", cfg.eval_slots);
  maybe(j, "dist_broadcast_period", cfg.dist_broadcast_period);
  maybe(j, "dist_total_slots", cfg.dist_total_slots);
  maybe(j, "mdp_action_set", cfg.mdp_action_set);
  maybe(j, "mdp_gamma", cfg.mdp_gamma);
  maybe(j, "seeds", cfg.seeds);
  maybe(j, "out_dir", cfg.out_dir);

  if (cfg.mdp_action_set.empty())
    for (double p = 0.0; p <= cfg.system.max_transmit + 1e-9; p += 1.0)
      cfg.mdp_action_set.push_back(p);

  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return parse_experiment_config(j);
}

inline StateGrid make_grid(const ExperimentConfig& cfg) {
  return make_default_grid(cfg.system, cfg.harvest, cfg.channel, cfg.grid.battery_bins,
                           cfg.grid.gain_bins, cfg.grid.harvest_bins);
}

}  // namespace ehmac
