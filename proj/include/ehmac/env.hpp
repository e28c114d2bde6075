#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehmac/rng.hpp"

namespace ehmac {

// Slotted energy-harvesting multiple access channel. One energy unit is
// 1e-2 J; the unit only affects labels, never the arithmetic.

struct SystemConfig {
  std::size_t num_nodes = 1;          // K
  double battery_capacity = 20.0;     // B_max
  double max_transmit = 15.0;         // P_max
  std::vector<double> action_grid;    // {0, p_min, ..., P_max}
  bool power_scaling_enabled = false; // divide transmit energy by K in the rate
  double initial_battery = 10.0;      // B_1
  double noise_psd = 1.0;

  void validate() const {
    if (num_nodes == 0) throw std::invalid_argument("SystemConfig: num_nodes must be positive");
    if (!(max_transmit > 0.0) || max_transmit > battery_capacity)
      throw std::invalid_argument("SystemConfig: require 0 < P_max <= B_max");
    if (initial_battery < 0.0 || initial_battery > battery_capacity)
      throw std::invalid_argument("SystemConfig: B_1 outside [0, B_max]");
    if (action_grid.empty()) throw std::invalid_argument("SystemConfig: empty action grid");
    if (action_grid.front() != 0.0)
      throw std::invalid_argument("SystemConfig: action grid must start at 0");
    if (action_grid.back() != max_transmit)
      throw std::invalid_argument("SystemConfig: action grid must end at P_max");
    if (!std::is_sorted(action_grid.begin(), action_grid.end()))
      throw std::invalid_argument("SystemConfig: action grid must be sorted");
  }
};

// Evenly spaced transmit energies {0, step, ..., p_max}.
inline std::vector<double> uniform_action_grid(double p_max, std::size_t levels) {
  if (levels < 2) throw std::invalid_argument("uniform_action_grid: need at least 2 levels");
  std::vector<double> grid(levels);
  for (std::size_t i = 0; i < levels; ++i)
    grid[i] = p_max * static_cast<double>(i) / static_cast<double>(levels - 1);
  grid.back() = p_max;
  return grid;
}

enum class TruncationMode { kRejectRenormalize, kClipAtZero };

// Non-negative truncated Gaussian harvesting process. (mean, variance) are
// the pre-truncation parameters; the realized mean sits above `mean`.
struct HarvestModel {
  double mean = 4.0;
  double variance = 3.5;
  TruncationMode truncation_mode = TruncationMode::kRejectRenormalize;

  void validate() const {
    if (!(variance >= 0.0)) throw std::invalid_argument("HarvestModel: variance must be >= 0");
  }
};

enum class ChannelFamily { kRayleighPowerGain, kDiscreteLevels };

// Block fading: the power gain is constant within a slot and redrawn i.i.d.
// at slot boundaries. Rayleigh amplitude fading gives a unit-mean
// exponential power gain.
struct ChannelModel {
  ChannelFamily family = ChannelFamily::kRayleighPowerGain;
  std::vector<double> level_set;  // discrete mode only
  std::vector<double> weights;    // optional, same length as level_set

  void validate() const {
    if (family == ChannelFamily::kDiscreteLevels) {
      if (level_set.empty()) throw std::invalid_argument("ChannelModel: empty level set");
      if (!std::is_sorted(level_set.begin(), level_set.end()))
        throw std::invalid_argument("ChannelModel: level set must be sorted");
      for (double g : level_set)
        if (g < 0.0) throw std::invalid_argument("ChannelModel: negative gain level");
      if (!weights.empty() && weights.size() != level_set.size())
        throw std::invalid_argument("ChannelModel: weights/levels length mismatch");
    }
  }
};

struct EnvModels {
  HarvestModel harvest;
  ChannelModel channel;
};

// Per-node state s = (B, g, e): battery at the start of the slot, the slot's
// channel power gain, and the energy harvested during the slot (usable from
// the next slot on).
struct NodeState {
  double battery = 0.0;
  double gain = 0.0;
  double harvest = 0.0;
};

struct JointState {
  std::vector<NodeState> per_node;
  long slot = 0;
};

// One generator per node; harvest and channel draws interleave on the node's
// own stream, so runs are reproducible regardless of how many nodes exist.
class NodeStreams {
 public:
  NodeStreams(std::uint64_t seed, std::size_t num_nodes) {
    Rng root(seed);
    streams_.reserve(num_nodes);
    for (std::size_t k = 0; k < num_nodes; ++k) streams_.push_back(root.substream(k));
  }
  Rng& node(std::size_t k) { return streams_.at(k); }
  std::size_t size() const { return streams_.size(); }

 private:
  std::vector<Rng> streams_;
};

// Battery evolution: B' = min([B + e - p]^+, B_max). Energy harvested in a
// slot becomes usable in the next one. Strict mode rejects p > B instead of
// relying on the clamp.
inline double battery_step(double battery, double harvest, double power, double battery_capacity,
                           bool strict = false) {
  if (strict && power > battery)
    throw std::invalid_argument("battery_step: p > B in strict mode");
  return std::min(std::max(battery + harvest - power, 0.0), battery_capacity);
}

inline double sample_harvest(const HarvestModel& model, Rng& rng) {
  const double sigma = std::sqrt(model.variance);
  if (model.truncation_mode == TruncationMode::kClipAtZero)
    return std::max(0.0, rng.gaussian(model.mean, sigma));
  // Reject-renormalize. The attempt cap only matters for pathological
  // parameters (mean far below zero with tiny variance); exhausting it
  // falls back to the boundary of the support.
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double e = rng.gaussian(model.mean, sigma);
    if (e >= 0.0) return e;
  }
  return 0.0;
}

inline double sample_channel(const ChannelModel& model, Rng& rng) {
  if (model.family == ChannelFamily::kRayleighPowerGain) return rng.exponential(1.0);
  if (model.weights.empty())
    return model.level_set[rng.uniform_int(model.level_set.size())];
  double total = 0.0;
  for (double w : model.weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < model.level_set.size(); ++i) {
    u -= model.weights[i];
    if (u < 0.0) return model.level_set[i];
  }
  return model.level_set.back();
}

// ln(1 + sum_k p_k g_k) in nats; unit noise PSD.
inline double slot_sum_rate(std::span<const double> powers, std::span<const double> gains) {
  if (powers.size() != gains.size())
    throw std::invalid_argument("slot_sum_rate: powers/gains length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < powers.size(); ++k) s += powers[k] * gains[k];
  return std::log1p(s);
}

// Upper bound on usable energy this slot: min(B, P_max).
inline double feasible_power_bound(const NodeState& s, const SystemConfig& config) {
  return std::min(s.battery, config.max_transmit);
}

inline JointState initial_state(const SystemConfig& config, const EnvModels& models,
                                NodeStreams& streams) {
  JointState js;
  js.per_node.resize(config.num_nodes);
  for (std::size_t k = 0; k < config.num_nodes; ++k) {
    Rng& rng = streams.node(k);
    js.per_node[k].battery = config.initial_battery;
    js.per_node[k].gain = sample_channel(models.channel, rng);
    js.per_node[k].harvest = sample_harvest(models.harvest, rng);
  }
  js.slot = 0;
  return js;
}

struct StepResult {
  JointState next;
  double reward = 0.0;  // nats
};

// Advances one slot. Feasibility is enforced strictly here so learning bugs
// surface; policies are expected to clamp before calling.
inline StepResult env_step(const JointState& state, std::span<const double> powers,
                           const EnvModels& models, const SystemConfig& config,
                           NodeStreams& streams) {
  const std::size_t K = config.num_nodes;
  if (state.per_node.size() != K || powers.size() != K)
    throw std::invalid_argument("env_step: dimension mismatch");
  for (std::size_t k = 0; k < K; ++k) {
    const double bound = feasible_power_bound(state.per_node[k], config);
    if (powers[k] < 0.0 || powers[k] > bound + 1e-12)
      throw std::invalid_argument("env_step: infeasible power at node " + std::to_string(k) +
                                  ": p=" + std::to_string(powers[k]) +
                                  " bound=" + std::to_string(bound));
  }

  StepResult out;
  const double scale = config.power_scaling_enabled ? 1.0 / static_cast<double>(K) : 1.0;
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += scale * powers[k] * state.per_node[k].gain;
  out.reward = std::log1p(s);

  out.next.per_node.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng& rng = streams.node(k);
    out.next.per_node[k].battery = battery_step(state.per_node[k].battery,
                                                state.per_node[k].harvest, powers[k],
                                                config.battery_capacity);
    out.next.per_node[k].gain = sample_channel(models.channel, rng);
    out.next.per_node[k].harvest = sample_harvest(models.harvest, rng);
  }
  out.next.slot = state.slot + 1;
  return out;
}

}  // namespace ehmac
