#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ehmac/central_policy.hpp"
#include "ehmac/dqn.hpp"
#include "ehmac/env.hpp"
#include "ehmac/statespace.hpp"

namespace ehmac {

// Mean-field layer: the shared reward over the state distribution, the value
// recursion and stationarity residuals, and the fictitious-play loop where
// each node learns its best response with deep Q-learning.

// Deterministic Markov policy on the discrete grid: all nodes in state i
// transmit p_i.
struct StatePolicy {
  std::vector<double> power_per_state;
};

inline void validate_policy(const StatePolicy& policy, const StateGrid& grid,
                            const SystemConfig& config) {
  if (policy.power_per_state.size() != grid.size())
    throw std::invalid_argument("StatePolicy: size mismatch with grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::size_t b, g, h;
    grid.unpack(i, b, g, h);
    const double bound = std::min(grid.battery_edges[b + 1], config.max_transmit);
    if (policy.power_per_state[i] < 0.0 || policy.power_per_state[i] > bound + 1e-12)
      throw std::invalid_argument("StatePolicy: infeasible power for state battery bin");
  }
}

// Shared per-slot reward ln(1 + K sum_i pi_i p_i g_i). Identical for every
// node; deliberately carries no own-state argument.
inline double mf_reward(const MeanFieldDistribution& pi, const StatePolicy& policy,
                        std::span<const double> state_gains, std::size_t num_nodes) {
  pi.require_simplex(1e-9);
  const std::size_t d = pi.size();
  if (policy.power_per_state.size() != d || state_gains.size() != d)
    throw std::invalid_argument("mf_reward: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    s += pi.probs[i] * policy.power_per_state[i] * state_gains[i];
  return std::log1p(static_cast<double>(num_nodes) * s);
}

// Value of following `policy` for `horizon` slots starting from pi0:
// V = sum_t R(pi_t) with pi_{t+1} = pi_t P.
inline double eval_value(const MeanFieldDistribution& pi0, const StatePolicy& policy,
                         const TransitionKernel& kernel, int horizon,
                         std::span<const double> state_gains, std::size_t num_nodes) {
  if (horizon < 1) throw std::invalid_argument("eval_value: horizon must be >= 1");
  MeanFieldDistribution pi = pi0;
  double v = 0.0;
  for (int t = 0; t < horizon; ++t) {
    v += mf_reward(pi, policy, state_gains, num_nodes);
    if (t + 1 < horizon) pi = evolve_distribution(pi, kernel);
  }
  return v;
}

// Residuals of the stationary-solution conditions: distribution fixed point
// and per-slot value drift.
inline std::pair<double, double> stationarity_residual(const MeanFieldDistribution& pi,
                                                       const StatePolicy& policy,
                                                       const TransitionKernel& kernel,
                                                       int horizon,
                                                       std::span<const double> state_gains,
                                                       std::size_t num_nodes) {
  const MeanFieldDistribution next = evolve_distribution(pi, kernel);
  const double dist_residual = l2_distance(pi, next);
  const double v = eval_value(pi, policy, kernel, horizon, state_gains, num_nodes);
  const double value_residual =
      std::abs(v / static_cast<double>(horizon) - mf_reward(pi, policy, state_gains, num_nodes));
  return {dist_residual, value_residual};
}

// Transition kernel induced by a state policy: the battery moves
// deterministically through bin representatives while next gain and harvest
// bins receive their law's mass.
inline TransitionKernel build_state_kernel(const StateGrid& grid, const StatePolicy& policy,
                                           const HarvestModel& harvest,
                                           const ChannelModel& channel,
                                           const SystemConfig& config) {
  if (policy.power_per_state.size() != grid.size())
    throw std::invalid_argument("build_state_kernel: policy size mismatch");
  const std::vector<double> gain_mass = channel_bin_masses(channel, grid.gain_edges);
  const std::vector<double> harvest_mass = harvest_bin_masses(harvest, grid.harvest_edges);
  const std::size_t d = grid.size();
  TransitionKernel kernel;
  kernel.d = d;
  kernel.p.assign(d * d, 0.0);
  ClampStats ignored;
  for (std::size_t i = 0; i < d; ++i) {
    const NodeState rep = grid.representative(i);
    const double p = std::min({policy.power_per_state[i], rep.battery, config.max_transmit});
    const double next_b = battery_step(rep.battery, rep.harvest, p, config.battery_capacity);
    const std::size_t nb = bin_index(grid.battery_edges, next_b, &ignored);
    double row_sum = 0.0;
    for (std::size_t ng = 0; ng < grid.gain_bins(); ++ng)
      for (std::size_t nh = 0; nh < grid.harvest_bins(); ++nh) {
        const double mass = gain_mass[ng] * harvest_mass[nh];
        kernel.p[i * d + grid.index_of(nb, ng, nh)] += mass;
        row_sum += mass;
      }
    if (std::abs(row_sum - 1.0) > 1e-9)
      throw std::runtime_error("build_state_kernel: probability mass leaked");
    for (std::size_t j = 0; j < d; ++j) kernel.p[i * d + j] /= row_sum;
  }
  return kernel;
}

// Stationary distribution of a kernel by power iteration.
inline MeanFieldDistribution stationary_distribution(const TransitionKernel& kernel,
                                                     int max_iters = 20000,
                                                     double tol = 1e-13) {
  MeanFieldDistribution pi = uniform_distribution(kernel.d);
  for (int it = 0; it < max_iters; ++it) {
    MeanFieldDistribution next = evolve_distribution(pi, kernel);
    const double delta = l2_distance(pi, next);
    pi = std::move(next);
    if (delta < tol) break;
  }
  return pi;
}

// Q-network input scaling derived from the environment's magnitudes.
inline std::array<double, 3> derive_state_scale(const EnvModels& models,
                                                const SystemConfig& config) {
  const double sigma = std::sqrt(models.harvest.variance);
  const double e_scale = std::max(1.0, models.harvest.mean + 2.0 * sigma);
  double g_scale = 2.0;  // unit-mean exponential: a couple of means
  if (models.channel.family == ChannelFamily::kDiscreteLevels)
    g_scale = std::max(1.0, models.channel.level_set.back());
  return {e_scale, std::max(1.0, config.battery_capacity), g_scale};
}

enum class RewardMode { kMeanFieldEstimate, kApBroadcast };

struct MFMARLConfig {
  double drift_threshold = 0.01;   // eps_1: early broadcast trigger
  double outer_tolerance = 0.001;  // eps_tilde: belief convergence
  long max_iteration_slots = 1000; // T
  RewardMode reward_mode = RewardMode::kMeanFieldEstimate;
  // The drift check arms only after this many slots: a few-node empirical
  // estimate needs a window before comparing it against a smooth belief is
  // meaningful.
  long min_estimation_slots = 100;
  long max_iterations = 10000;
  long max_total_slots = 1000000;  // training budget across iterations
  long min_total_slots = 0;        // keep training even if beliefs settle early
  long eval_slots = 20000;         // greedy evaluation after training

  void validate() const {
    if (!(drift_threshold > 0.0) || !(outer_tolerance > 0.0))
      throw std::invalid_argument("MFMARLConfig: thresholds must be positive");
    if (max_iteration_slots < 1)
      throw std::invalid_argument("MFMARLConfig: T must be >= 1");
  }
};

struct FictitiousPlayState {
  long m = 1;                             // iteration counter
  MeanFieldDistribution averaged_belief;  // bar pi_m
  MeanFieldDistribution latest_empirical; // pi_m
};

struct IterationMetrics {
  long m = 0;
  long slots_used = 0;
  double belief_drift = 0.0;        // || bar pi_{m+1} - bar pi_m ||_2
  double mean_reward = 0.0;         // realized sum rate per slot
  double policy_disagreement = 0.0; // fraction of actions off the modal policy
};

// Environment, agents and bookkeeping shared across fictitious-play
// iterations. Agents persist (Q-weights warm-start each iteration); the
// modal StatePolicy summarizes what agents currently do per discrete state.
struct MFMARLWorld {
  EnvModels models;
  SystemConfig config;
  StateGrid grid;
  std::vector<DQNAgent> agents;
  NodeStreams streams;
  JointState state;
  StatePolicy policy_summary;
  std::vector<std::vector<long>> action_tally;  // [state][action], current iteration
  ClampStats clamp_stats;

  MFMARLWorld(const EnvModels& models_, const SystemConfig& config_, const StateGrid& grid_,
              const DQNConfig& dqn_cfg, const MLPArchitecture& q_arch, std::uint64_t seed)
      : models(models_), config(config_), grid(grid_), streams(seed, config_.num_nodes) {
    config.validate();
    models.harvest.validate();
    models.channel.validate();
    grid.validate();
    for (std::size_t k = 0; k < config.num_nodes; ++k)
      agents.emplace_back(config.action_grid, config.max_transmit, dqn_cfg, q_arch,
                          mix_seed(seed, 0xa6e57 + k));
    state = initial_state(config, models, streams);
    policy_summary.power_per_state.assign(grid.size(), 0.0);
    action_tally.assign(grid.size(), std::vector<long>(config.action_grid.size(), 0));
  }
};

namespace detail {

// Node-level reward estimate from the belief: Eq.-(5)-style own term plus
// the mean-field contribution of the other K-1 nodes under the modal policy.
inline double mean_field_reward_estimate(double own_power, double own_gain,
                                         const MeanFieldDistribution& belief,
                                         const StatePolicy& policy,
                                         const std::vector<double>& state_gains,
                                         std::size_t num_nodes) {
  double s = 0.0;
  for (std::size_t i = 0; i < belief.size(); ++i)
    s += belief.probs[i] * policy.power_per_state[i] * state_gains[i];
  return std::log1p(own_power * own_gain + static_cast<double>(num_nodes - 1) * s);
}

}  // namespace detail

// One fictitious-play iteration (Algorithm steps: act, estimate, broadcast,
// average). Returns the iteration metrics; appends realized per-slot rates
// to rps_history when given.
inline IterationMetrics run_iteration(FictitiousPlayState& fp, MFMARLWorld& world,
                                      const MFMARLConfig& cfg,
                                      std::vector<double>* rps_history = nullptr,
                                      bool learning_enabled = true) {
  cfg.validate();
  const std::size_t K = world.config.num_nodes;
  const std::size_t d = world.grid.size();
  const std::vector<double> state_gains = world.grid.state_gains();

  for (auto& tally : world.action_tally) std::fill(tally.begin(), tally.end(), 0L);

  std::vector<double> visit_avg(d, 0.0);  // running mean of per-slot empirical dists
  MeanFieldDistribution pi_mn = fp.latest_empirical;
  double reward_sum = 0.0;
  long disagreements = 0;
  long n = 0;
  std::vector<std::size_t> idx(K);
  std::vector<int> actions(K);
  std::vector<double> powers(K);

  while (n < cfg.max_iteration_slots) {
    ++n;
    for (std::size_t k = 0; k < K; ++k) {
      const NodeState& s = world.state.per_node[k];
      idx[k] = discretize(s, world.grid, &world.clamp_stats);
      actions[k] = world.agents[k].act(s, !learning_enabled);
      powers[k] = std::min(world.agents[k].power_of(actions[k]),
                           feasible_power_bound(s, world.config));
    }

    // Modal-policy tally first, so reward estimates see this slot's actions.
    for (std::size_t k = 0; k < K; ++k) {
      auto& tally = world.action_tally[idx[k]];
      ++tally[static_cast<std::size_t>(actions[k])];
      const auto best = std::max_element(tally.begin(), tally.end());
      const std::size_t modal = static_cast<std::size_t>(best - tally.begin());
      std::size_t bb, gb, hb;
      world.grid.unpack(idx[k], bb, gb, hb);
      world.policy_summary.power_per_state[idx[k]] =
          std::min({world.config.action_grid[modal], world.grid.battery_edges[bb + 1],
                    world.config.max_transmit});
      if (static_cast<std::size_t>(actions[k]) != modal) ++disagreements;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) visit_avg[i] *= (1.0 - inv_n);
    for (std::size_t k = 0; k < K; ++k) visit_avg[idx[k]] += inv_n / static_cast<double>(K);

    StepResult step = env_step(world.state, powers, world.models, world.config, world.streams);
    reward_sum += step.reward;
    if (rps_history) rps_history->push_back(step.reward);

    if (learning_enabled) {
      for (std::size_t k = 0; k < K; ++k) {
        double r = step.reward;
        if (cfg.reward_mode == RewardMode::kMeanFieldEstimate)
          r = detail::mean_field_reward_estimate(powers[k], world.state.per_node[k].gain,
                                                 fp.averaged_belief, world.policy_summary,
                                                 state_gains, K);
        world.agents[k].observe(world.state.per_node[k], actions[k], r, step.next.per_node[k]);
      }
    }
    world.state = std::move(step.next);

    pi_mn.probs = visit_avg;
    if (n >= cfg.min_estimation_slots &&
        l2_distance(fp.latest_empirical, pi_mn) >= cfg.drift_threshold)
      break;
  }

  IterationMetrics metrics;
  metrics.m = fp.m;
  metrics.slots_used = n;
  metrics.mean_reward = reward_sum / static_cast<double>(n);
  metrics.policy_disagreement =
      static_cast<double>(disagreements) / static_cast<double>(n * static_cast<long>(K));

  const MeanFieldDistribution next_avg = fp_average(fp.averaged_belief, pi_mn, fp.m);
  metrics.belief_drift = l2_distance(next_avg, fp.averaged_belief);
  fp.latest_empirical = std::move(pi_mn);
  fp.averaged_belief = next_avg;
  ++fp.m;
  return metrics;
}

struct MFMARLResult {
  MeanFieldDistribution stationary_belief;
  StatePolicy learned_policy;
  std::vector<IterationMetrics> iterations;
  std::vector<double> rps_history;  // realized sum rate per training slot
  bool converged = false;
  long total_slots = 0;
  double train_rps = 0.0;  // mean over the last quarter of training
  double eval_rps = 0.0;   // greedy rollout after training
};

inline double greedy_eval(MFMARLWorld& world, long slots) {
  if (slots < 1) return 0.0;
  const std::size_t K = world.config.num_nodes;
  double total = 0.0;
  std::vector<double> powers(K);
  for (long t = 0; t < slots; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      const NodeState& s = world.state.per_node[k];
      const int a = world.agents[k].act(s, /*greedy=*/true);
      powers[k] = std::min(world.agents[k].power_of(a), feasible_power_bound(s, world.config));
    }
    StepResult step = env_step(world.state, powers, world.models, world.config, world.streams);
    total += step.reward;
    world.state = std::move(step.next);
  }
  return total / static_cast<double>(slots);
}

// Full fictitious-play learning loop: iterate until the averaged belief
// settles (or budgets run out), then evaluate the greedy policies.
inline MFMARLResult run_mfmarl(const EnvModels& models, const SystemConfig& config,
                               const StateGrid& grid, const DQNConfig& dqn_cfg,
                               const MLPArchitecture& q_arch, const MFMARLConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  MFMARLWorld world(models, config, grid, dqn_cfg, q_arch, seed);
  FictitiousPlayState fp;
  fp.averaged_belief = uniform_distribution(grid.size());
  fp.latest_empirical = fp.averaged_belief;

  MFMARLResult out;
  while (static_cast<long>(out.iterations.size()) < cfg.max_iterations &&
         out.total_slots < cfg.max_total_slots) {
    IterationMetrics metrics = run_iteration(fp, world, cfg, &out.rps_history);
    out.total_slots += metrics.slots_used;
    out.iterations.push_back(metrics);
    if (metrics.belief_drift <= cfg.outer_tolerance && out.iterations.size() > 1 &&
        out.total_slots >= cfg.min_total_slots) {
      out.converged = true;
      break;
    }
  }
  out.stationary_belief = fp.averaged_belief;
  out.learned_policy = world.policy_summary;
  const std::size_t tail = out.rps_history.size() / 4;
  double s = 0.0;
  for (std::size_t i = out.rps_history.size() - tail; i < out.rps_history.size(); ++i)
    s += out.rps_history[i];
  out.train_rps = tail > 0 ? s / static_cast<double>(tail) : 0.0;
  out.eval_rps = greedy_eval(world, cfg.eval_slots);
  return out;
}

// Distributed inference with the centralized net: the node's own state fills
// slot k of the 3K input; the other K-1 states are drawn from the broadcast
// distribution and mapped to bin representatives.
inline double act_distributed_dnn(const CentralPolicy& central, const NodeState& own_state,
                                  std::size_t own_index, const MeanFieldDistribution& pi,
                                  const StateGrid& grid, Rng& rng) {
  pi.require_simplex(1e-9);
  const std::size_t K = central.config.num_nodes;
  if (own_index >= K) throw std::invalid_argument("act_distributed_dnn: node index");
  JointState js;
  js.per_node.resize(K);
  for (std::size_t j = 0; j < K; ++j) {
    if (j == own_index) {
      js.per_node[j] = own_state;
      continue;
    }
    double u = rng.uniform();
    std::size_t draw = pi.size() - 1;
    for (std::size_t i = 0; i < pi.size(); ++i) {
      u -= pi.probs[i];
      if (u < 0.0) {
        draw = i;
        break;
      }
    }
    js.per_node[j] = grid.representative(draw);
  }
  const std::vector<double> p = act_central(central, js);
  return std::clamp(p[own_index], 0.0,
                    std::min(own_state.battery, central.config.max_transmit));
}

struct DistDNNResult {
  std::vector<double> rps_history;
  std::vector<MeanFieldDistribution> belief_trajectory;  // bar pi after each broadcast
  double eval_rps = 0.0;  // mean rate after the first broadcast window
};

// Fixed-policy run: the trained net is deployed at every node, the AP
// broadcasts the empirical distribution every T slots, and beliefs follow
// the same running average as fictitious play.
inline DistDNNResult run_distributed_dnn(const EnvModels& models, const SystemConfig& config,
                                         const StateGrid& grid, const CentralPolicy& central,
                                         long broadcast_period, long total_slots,
                                         std::uint64_t seed) {
  if (broadcast_period < 1 || total_slots < 1)
    throw std::invalid_argument("run_distributed_dnn: bad horizon");
  const std::size_t K = config.num_nodes;
  const std::size_t d = grid.size();
  NodeStreams streams(seed, K);
  Rng sample_rng(mix_seed(seed, 0xd15d));
  JointState state = initial_state(config, models, streams);

  DistDNNResult out;
  MeanFieldDistribution belief = uniform_distribution(d);
  std::vector<double> window_avg(d, 0.0);
  long window_n = 0;
  long m = 1;
  ClampStats clamp;
  std::vector<double> powers(K);

  for (long t = 0; t < total_slots; ++t) {
    ++window_n;
    const double inv_n = 1.0 / static_cast<double>(window_n);
    for (std::size_t i = 0; i < d; ++i) window_avg[i] *= (1.0 - inv_n);
    for (std::size_t k = 0; k < K; ++k)
      window_avg[discretize(state.per_node[k], grid, &clamp)] += inv_n / static_cast<double>(K);

    for (std::size_t k = 0; k < K; ++k)
      powers[k] = act_distributed_dnn(central, state.per_node[k], k, belief, grid, sample_rng);
    StepResult step = env_step(state, powers, models, config, streams);
    out.rps_history.push_back(step.reward);
    state = std::move(step.next);

    if (window_n == broadcast_period) {
      MeanFieldDistribution latest;
      latest.probs = window_avg;
      belief = fp_average(belief, latest, m);
      ++m;
      out.belief_trajectory.push_back(belief);
      std::fill(window_avg.begin(), window_avg.end(), 0.0);
      window_n = 0;
    }
  }
  const std::size_t skip = static_cast<std::size_t>(
      std::min<long>(broadcast_period, total_slots / 2));
  double s = 0.0;
  for (std::size_t i = skip; i < out.rps_history.size(); ++i) s += out.rps_history[i];
  out.eval_rps = s / static_cast<double>(out.rps_history.size() - skip);
  return out;
}

}  // namespace ehmac
