#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "ehmac/checkpoint.hpp"
#include "ehmac/env.hpp"
#include "ehmac/mlp.hpp"
#include "ehmac/offline.hpp"

namespace ehmac {

// Centralized online policy: a DNN trained on offline optima maps the joint
// state (E, B, G) to a K-length transmit energy vector.

struct CentralPolicy {
  MLPParameters net;
  Normalizer norm;
  SystemConfig config;
};

// Input 3K, first hidden layer 30K, then width repeats on odd hidden layers
// and shrinks by 2K on even ones; leaky-relu hidden, linear output. The full
// profile uses 30 hidden layers; 6 gives the small profile used in tests.
inline MLPArchitecture build_central_arch(std::size_t num_nodes, std::size_t hidden_layers = 30) {
  if (num_nodes == 0) throw std::invalid_argument("build_central_arch: K must be >= 1");
  if (hidden_layers < 1) throw std::invalid_argument("build_central_arch: need hidden layers");
  MLPArchitecture a;
  a.layer_sizes.push_back(3 * num_nodes);
  std::size_t width = 30 * num_nodes;
  for (std::size_t j = 0; j < hidden_layers; ++j) {
    if (j > 0 && j % 2 == 0) {
      if (width < 2 * num_nodes + num_nodes)
        throw std::invalid_argument("build_central_arch: shrink rule drove width below K");
      width -= 2 * num_nodes;
    }
    a.layer_sizes.push_back(width);
  }
  a.layer_sizes.push_back(num_nodes);
  a.activations.assign(a.layer_sizes.size() - 1, Activation::kLeakyRelu);
  a.activations.back() = Activation::kLinear;
  a.validate();
  return a;
}

struct CentralTrainResult {
  CentralPolicy policy;
  TrainHistory history;
  double val_mse = 0.0;
  double target_variance = 0.0;  // constant-predictor baseline on validation
};

// Trains on a (deterministically shuffled) split of the dataset; the last
// fraction becomes the validation set.
inline CentralTrainResult train_central(const Dataset& ds, const SystemConfig& config,
                                        const TrainingConfig& cfg,
                                        double validation_fraction = 0.2,
                                        std::size_t hidden_layers = 6) {
  if (ds.records.empty()) throw std::invalid_argument("train_central: empty dataset");
  if (ds.num_nodes != config.num_nodes)
    throw std::invalid_argument("train_central: dataset K does not match config");
  const std::size_t n = ds.records.size();
  const std::size_t n_val = std::min(n - 1, static_cast<std::size_t>(
                                                 static_cast<double>(n) * validation_fraction));
  const std::size_t n_train = n - n_val;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(mix_seed(cfg.shuffle_seed, 0x51u));
  split_rng.shuffle(order);

  const std::size_t in_w = 3 * ds.num_nodes, out_w = ds.num_nodes;
  Matrix x(n_train, in_w), y(n_train, out_w), xv(n_val, in_w), yv(n_val, out_w);
  for (std::size_t i = 0; i < n; ++i) {
    const DataRecord& rec = ds.records[order[i]];
    Matrix& xd = i < n_train ? x : xv;
    Matrix& yd = i < n_train ? y : yv;
    const std::size_t r = i < n_train ? i : i - n_train;
    std::copy(rec.input.begin(), rec.input.end(), xd.row(r));
    std::copy(rec.target.begin(), rec.target.end(), yd.row(r));
  }

  CentralTrainResult out;
  out.policy.config = config;
  out.policy.norm.fit(x);
  const Matrix xn = out.policy.norm.apply(x);
  const Matrix xvn = n_val > 0 ? out.policy.norm.apply(xv) : xv;

  Rng init_rng(mix_seed(cfg.shuffle_seed, 0xce17u));
  out.policy.net = init_params(build_central_arch(config.num_nodes, hidden_layers), init_rng);
  out.history = train(out.policy.net, xn, y, xvn, yv, cfg);
  out.val_mse = out.history.val_loss.empty() ? 0.0 : out.history.val_loss.back();

  if (n_val > 0) {
    std::vector<double> col_mean(out_w, 0.0);
    for (std::size_t r = 0; r < n_val; ++r)
      for (std::size_t c = 0; c < out_w; ++c) col_mean[c] += yv(r, c);
    for (double& m : col_mean) m /= static_cast<double>(n_val);
    double var = 0.0;
    for (std::size_t r = 0; r < n_val; ++r)
      for (std::size_t c = 0; c < out_w; ++c) {
        const double d = yv(r, c) - col_mean[c];
        var += d * d;
      }
    out.target_variance = var / static_cast<double>(n_val * out_w);
  }
  return out;
}

// Forward pass on the concatenated (E, B, G) vector, then projection onto
// the feasible box [0, min(B_k, P_max)].
inline std::vector<double> act_central(const CentralPolicy& policy, const JointState& js) {
  const std::size_t K = policy.config.num_nodes;
  if (js.per_node.size() != K)
    throw std::invalid_argument("act_central: joint state width mismatch");
  std::vector<double> input(3 * K);
  for (std::size_t k = 0; k < K; ++k) {
    input[k] = js.per_node[k].harvest;
    input[K + k] = js.per_node[k].battery;
    input[2 * K + k] = js.per_node[k].gain;
  }
  if (policy.norm.fitted()) policy.norm.apply_inplace(input);
  std::vector<double> p = forward(policy.net, input);
  for (std::size_t k = 0; k < K; ++k)
    p[k] = std::clamp(p[k], 0.0, feasible_power_bound(js.per_node[k], policy.config));
  return p;
}

using Actor = std::function<std::vector<double>(const JointState&)>;

// Rate per slot of an actor over a fresh rollout; the env rejects any
// infeasible action the actor emits.
inline double evaluate_policy(const Actor& actor, const EnvModels& models,
                              const SystemConfig& config, long slots, std::uint64_t seed) {
  if (slots < 1) throw std::invalid_argument("evaluate_policy: slots must be >= 1");
  NodeStreams streams(seed, config.num_nodes);
  JointState state = initial_state(config, models, streams);
  double total = 0.0;
  for (long n = 0; n < slots; ++n) {
    const std::vector<double> powers = actor(state);
    StepResult r = env_step(state, powers, models, config, streams);
    total += r.reward;
    state = std::move(r.next);
  }
  return total / static_cast<double>(slots);
}

inline void save_central_policy(const CentralPolicy& policy, const std::string& path) {
  nlohmann::json j;
  j["kind"] = "central_policy";
  j["num_nodes"] = policy.config.num_nodes;
  j["battery_capacity"] = policy.config.battery_capacity;
  j["max_transmit"] = policy.config.max_transmit;
  j["initial_battery"] = policy.config.initial_battery;
  j["action_grid"] = policy.config.action_grid;
  j["power_scaling_enabled"] = policy.config.power_scaling_enabled;
  j["normalizer"] = normalizer_to_json(policy.norm);
  j["net"] = mlp_to_json(policy.net);
  write_json_file(j, path);
}

inline CentralPolicy load_central_policy(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  if (j.at("kind").get<std::string>() != "central_policy")
    throw std::runtime_error("load_central_policy: wrong checkpoint kind");
  CentralPolicy p;
  p.config.num_nodes = j.at("num_nodes").get<std::size_t>();
  p.config.battery_capacity = j.at("battery_capacity").get<double>();
  p.config.max_transmit = j.at("max_transmit").get<double>();
  p.config.initial_battery = j.at("initial_battery").get<double>();
  p.config.action_grid = j.at("action_grid").get<std::vector<double>>();
  p.config.power_scaling_enabled = j.at("power_scaling_enabled").get<bool>();
  p.norm = normalizer_from_json(j.at("normalizer"));
  p.net = mlp_from_json(j.at("net"));
  return p;
}

}  // namespace ehmac
