#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ehmac/env.hpp"
#include "ehmac/statespace.hpp"

namespace ehmac {

// Point-to-point tabular MDP baseline solved by value iteration. Transitions
// factor as (deterministic battery move) x (channel law) x (harvest law), so
// rows are stored sparse.

struct TabularMDP {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  // transitions[s][a]: sparse row of (next state, probability); an empty row
  // marks an infeasible (s, a) pair.
  std::vector<std::vector<std::vector<std::pair<std::uint32_t, double>>>> transitions;
  std::vector<std::vector<double>> rewards;  // [s][a]
  double discount = 0.99;

  bool feasible(std::size_t s, std::size_t a) const { return !transitions[s][a].empty(); }

  void require_stochastic(double tol = 1e-9) const {
    for (std::size_t s = 0; s < num_states; ++s)
      for (std::size_t a = 0; a < num_actions; ++a) {
        if (!feasible(s, a)) continue;
        double sum = 0.0;
        for (const auto& [j, p] : transitions[s][a]) {
          if (p < 0.0) throw std::runtime_error("TabularMDP: negative probability");
          if (j >= num_states) throw std::runtime_error("TabularMDP: index out of range");
          sum += p;
        }
        if (std::abs(sum - 1.0) > tol)
          throw std::runtime_error("TabularMDP: probability mass leaked");
      }
  }
};

// Builds the K=1 MDP on the grid: reward ln(1 + p g_rep), battery advanced
// through bin representatives and snapped back onto the grid.
inline TabularMDP build_p2p_mdp(const HarvestModel& harvest, const ChannelModel& channel,
                                const SystemConfig& config, const StateGrid& grid,
                                const std::vector<double>& action_set, double gamma) {
  if (action_set.empty()) throw std::invalid_argument("build_p2p_mdp: empty action set");
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("build_p2p_mdp: gamma in [0,1)");
  grid.validate();
  const std::vector<double> gain_mass = channel_bin_masses(channel, grid.gain_edges);
  const std::vector<double> harvest_mass = harvest_bin_masses(harvest, grid.harvest_edges);

  TabularMDP mdp;
  mdp.num_states = grid.size();
  mdp.num_actions = action_set.size();
  mdp.discount = gamma;
  mdp.transitions.assign(mdp.num_states, {});
  mdp.rewards.assign(mdp.num_states, std::vector<double>(mdp.num_actions, 0.0));
  ClampStats ignored;

  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    mdp.transitions[s].resize(mdp.num_actions);
    const NodeState rep = grid.representative(s);
    const double bound = std::min(rep.battery, config.max_transmit);
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const double p = action_set[a];
      if (p > bound + 1e-12) continue;  // infeasible pair stays excluded
      mdp.rewards[s][a] = std::log1p(p * rep.gain);
      const double next_b = battery_step(rep.battery, rep.harvest, p, config.battery_capacity);
      const std::size_t nb = bin_index(grid.battery_edges, next_b, &ignored);
      auto& row = mdp.transitions[s][a];
      row.reserve(grid.gain_bins() * grid.harvest_bins());
      double sum = 0.0;
      for (std::size_t ng = 0; ng < grid.gain_bins(); ++ng)
        for (std::size_t nh = 0; nh < grid.harvest_bins(); ++nh) {
          const double mass = gain_mass[ng] * harvest_mass[nh];
          if (mass == 0.0) continue;
          row.emplace_back(static_cast<std::uint32_t>(grid.index_of(nb, ng, nh)), mass);
          sum += mass;
        }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::runtime_error("build_p2p_mdp: probability mass leaked");
      for (auto& [j, q] : row) q /= sum;
    }
  }
  return mdp;
}

struct ValueTable {
  std::vector<double> values;
  std::vector<int> greedy_action;
  double bellman_residual = 0.0;  // final sup-norm step
  int iterations = 0;
};

inline ValueTable value_iteration(const TabularMDP& mdp, double tol = 1e-6,
                                  int max_iters = 100000) {
  ValueTable vt;
  vt.values.assign(mdp.num_states, 0.0);
  vt.greedy_action.assign(mdp.num_states, 0);
  std::vector<double> next(mdp.num_states, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    double residual = 0.0;
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = -1;
      for (std::size_t a = 0; a < mdp.num_actions; ++a) {
        if (!mdp.feasible(s, a)) continue;
        double q = mdp.rewards[s][a];
        for (const auto& [j, p] : mdp.transitions[s][a]) q += mdp.discount * p * vt.values[j];
        if (q > best) {
          best = q;
          best_a = static_cast<int>(a);
        }
      }
      if (best_a < 0) throw std::runtime_error("value_iteration: state with no feasible action");
      next[s] = best;
      vt.greedy_action[s] = best_a;
      residual = std::max(residual, std::abs(next[s] - vt.values[s]));
    }
    vt.values.swap(next);
    vt.bellman_residual = residual;
    vt.iterations = it + 1;
    if (residual < tol) break;
  }
  return vt;
}

// Exact H-step discounted value of a fixed policy by forward recursion;
// the verification oracle for value_iteration.
inline std::vector<double> policy_evaluate_bruteforce(const TabularMDP& mdp,
                                                      const std::vector<int>& policy,
                                                      int horizon) {
  if (policy.size() != mdp.num_states)
    throw std::invalid_argument("policy_evaluate_bruteforce: policy size");
  std::vector<double> v(mdp.num_states, 0.0);
  for (int h = 0; h < horizon; ++h) {
    std::vector<double> next(mdp.num_states, 0.0);
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      const auto a = static_cast<std::size_t>(policy[s]);
      if (!mdp.feasible(s, a))
        throw std::invalid_argument("policy_evaluate_bruteforce: infeasible action");
      double q = mdp.rewards[s][a];
      for (const auto& [j, p] : mdp.transitions[s][a]) q += mdp.discount * p * v[j];
      next[s] = q;
    }
    v.swap(next);
  }
  return v;
}

// Rolls the greedy table policy in the continuous environment; actions clamp
// to the realized battery.
inline double evaluate_mdp_policy(const ValueTable& vt, const StateGrid& grid,
                                  const std::vector<double>& action_set,
                                  const EnvModels& models, const SystemConfig& config,
                                  long slots, std::uint64_t seed) {
  if (config.num_nodes != 1)
    throw std::invalid_argument("evaluate_mdp_policy: point-to-point baseline only");
  NodeStreams streams(seed, 1);
  JointState state = initial_state(config, models, streams);
  ClampStats clamp;
  double total = 0.0;
  for (long t = 0; t < slots; ++t) {
    const std::size_t s = discretize(state.per_node[0], grid, &clamp);
    double p = action_set[static_cast<std::size_t>(vt.greedy_action[s])];
    p = std::min(p, feasible_power_bound(state.per_node[0], config));
    const std::vector<double> powers{p};
    StepResult step = env_step(state, powers, models, config, streams);
    total += step.reward;
    state = std::move(step.next);
  }
  return total / static_cast<double>(slots);
}

}  // namespace ehmac
