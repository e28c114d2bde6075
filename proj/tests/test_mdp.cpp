#include "ehmac/mdp.hpp"

#include <cmath>
#include <gtest/gtest.h>

using namespace ehmac;

namespace {

SystemConfig p2p_config() {
  SystemConfig c;
  c.num_nodes = 1;
  c.battery_capacity = 6.0;
  c.max_transmit = 3.0;
  c.action_grid = {0.0, 1.0, 2.0, 3.0};
  c.initial_battery = 3.0;
  return c;
}

// Hand-built two-state chain: s0 {a0: r=2 stay, a1: r=3 -> s1}, s1 {a0: r=1 -> s0}.
TabularMDP two_state_chain(double gamma) {
  TabularMDP mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.discount = gamma;
  mdp.transitions.assign(2, std::vector<std::vector<std::pair<std::uint32_t, double>>>(2));
  mdp.rewards.assign(2, std::vector<double>(2, 0.0));
  mdp.transitions[0][0] = {{0, 1.0}};
  mdp.rewards[0][0] = 2.0;
  mdp.transitions[0][1] = {{1, 1.0}};
  mdp.rewards[0][1] = 3.0;
  mdp.transitions[1][0] = {{0, 1.0}};
  mdp.rewards[1][0] = 1.0;
  return mdp;
}

}  // namespace

TEST(BuildP2pMdp, DeterministicWorldGivesDeterministicChain) {
  const SystemConfig c = p2p_config();
  HarvestModel h;
  h.mean = 1.0;
  h.variance = 1e-12;
  ChannelModel ch;
  ch.family = ChannelFamily::kDiscreteLevels;
  ch.level_set = {1.0};
  const StateGrid grid = make_default_grid(c, h, ch, 6, 1, 1);
  const TabularMDP mdp = build_p2p_mdp(h, ch, c, grid, c.action_grid, 0.9);
  mdp.require_stochastic(1e-9);
  for (std::size_t s = 0; s < mdp.num_states; ++s)
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      if (!mdp.feasible(s, a)) continue;
      EXPECT_EQ(mdp.transitions[s][a].size(), 1u);  // single successor
      EXPECT_NEAR(mdp.transitions[s][a][0].second, 1.0, 1e-12);
    }
}

TEST(BuildP2pMdp, RowsAreStochasticAndInfeasiblePairsExcluded) {
  const SystemConfig c = p2p_config();
  HarvestModel h;
  h.mean = 1.5;
  h.variance = 1.0;
  ChannelModel ch;  // rayleigh
  const StateGrid grid = make_default_grid(c, h, ch, 4, 3, 3);
  const TabularMDP mdp = build_p2p_mdp(h, ch, c, grid, c.action_grid, 0.99);
  mdp.require_stochastic(1e-9);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    const NodeState rep = grid.representative(s);
    const double bound = std::min(rep.battery, c.max_transmit);
    for (std::size_t a = 0; a < mdp.num_actions; ++a)
      EXPECT_EQ(mdp.feasible(s, a), c.action_grid[a] <= bound + 1e-12);
  }
}

TEST(BuildP2pMdp, TransitionFrequenciesMatchSimulation) {
  const SystemConfig c = p2p_config();
  HarvestModel h;
  h.mean = 1.5;
  h.variance = 1.0;
  ChannelModel ch;
  ch.family = ChannelFamily::kDiscreteLevels;
  ch.level_set = {0.5, 1.5};
  const StateGrid grid = make_default_grid(c, h, ch, 3, 2, 2);
  const TabularMDP mdp = build_p2p_mdp(h, ch, c, grid, c.action_grid, 0.99);

  // fix one (s, a) and compare empirical successor frequencies by chi-square
  const std::size_t s = discretize({3.0, 0.5, 1.5}, grid);
  const std::size_t a = 1;
  ASSERT_TRUE(mdp.feasible(s, a));
  const NodeState rep = grid.representative(s);
  Rng rng(97);
  std::vector<long> counts(mdp.num_states, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double next_b =
        battery_step(rep.battery, rep.harvest, c.action_grid[a], c.battery_capacity);
    const NodeState next{next_b, sample_channel(ch, rng), sample_harvest(h, rng)};
    ++counts[discretize(next, grid)];
  }
  double chi2 = 0.0;
  int dof = -1;
  for (const auto& [j, prob] : mdp.transitions[s][a]) {
    const double expected = prob * n;
    if (expected < 5.0) continue;
    chi2 += (counts[j] - expected) * (counts[j] - expected) / expected;
    ++dof;
  }
  ASSERT_GT(dof, 0);
  EXPECT_LT(chi2, dof + 4.0 * std::sqrt(2.0 * dof) + 8.0);  // generous upper quantile
}

TEST(ValueIteration, SingleStateGeometricSeries) {
  TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = 2;
  mdp.discount = 0.9;
  mdp.transitions.assign(1, std::vector<std::vector<std::pair<std::uint32_t, double>>>(2));
  mdp.rewards.assign(1, std::vector<double>(2, 0.0));
  mdp.transitions[0][0] = {{0, 1.0}};
  mdp.rewards[0][0] = 0.1;
  mdp.transitions[0][1] = {{0, 1.0}};
  mdp.rewards[0][1] = 0.9;
  const ValueTable vt = value_iteration(mdp, 1e-10);
  EXPECT_NEAR(vt.values[0], 0.9 / (1.0 - 0.9), 1e-7);
  EXPECT_EQ(vt.greedy_action[0], 1);
  EXPECT_LT(vt.bellman_residual, 1e-10);
}

TEST(ValueIteration, TwoStateHandCase) {
  // gamma = 0.5: V0 = 3 + 0.5 V1, V1 = 1 + 0.5 V0 -> V0 = 14/3, V1 = 10/3
  const TabularMDP mdp = two_state_chain(0.5);
  const ValueTable vt = value_iteration(mdp, 1e-9);
  EXPECT_NEAR(vt.values[0], 14.0 / 3.0, 1e-6);
  EXPECT_NEAR(vt.values[1], 10.0 / 3.0, 1e-6);
  EXPECT_EQ(vt.greedy_action[0], 1);
  EXPECT_EQ(vt.greedy_action[1], 0);
}

TEST(PolicyEvaluateBruteforce, BaseCasesAndAgreementWithValueIteration) {
  const TabularMDP mdp = two_state_chain(0.5);
  const std::vector<int> policy{1, 0};

  // H = 1 is the immediate reward
  const std::vector<double> v1 = policy_evaluate_bruteforce(mdp, policy, 1);
  EXPECT_DOUBLE_EQ(v1[0], 3.0);
  EXPECT_DOUBLE_EQ(v1[1], 1.0);

  // zero-reward variant evaluates to zero
  TabularMDP zero = mdp;
  for (auto& row : zero.rewards) std::fill(row.begin(), row.end(), 0.0);
  for (double v : policy_evaluate_bruteforce(zero, policy, 64)) EXPECT_DOUBLE_EQ(v, 0.0);

  // truncated-horizon evaluation of the greedy policy approaches V with the
  // gamma^H * ||V||_inf / (1 - gamma) tail bound
  const ValueTable vt = value_iteration(mdp, 1e-12);
  const int horizon = 40;
  const std::vector<double> vh = policy_evaluate_bruteforce(mdp, vt.greedy_action, horizon);
  double v_inf = 0.0;
  for (double v : vt.values) v_inf = std::max(v_inf, std::abs(v));
  const double bound = std::pow(mdp.discount, horizon) * v_inf / (1.0 - mdp.discount);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(vh[s], vt.values[s], bound + 1e-9);
}

TEST(ValueIteration, GreedyDominatesRandomPolicies) {
  const SystemConfig c = p2p_config();
  HarvestModel h;
  h.mean = 1.5;
  h.variance = 1.0;
  ChannelModel ch;
  ch.family = ChannelFamily::kDiscreteLevels;
  ch.level_set = {0.5, 1.5};
  const StateGrid grid = make_default_grid(c, h, ch, 3, 2, 2);
  const TabularMDP mdp = build_p2p_mdp(h, ch, c, grid, c.action_grid, 0.9);
  const ValueTable vt = value_iteration(mdp, 1e-9);
  const int horizon = 200;  // gamma^200 is negligible
  const std::vector<double> v_greedy = policy_evaluate_bruteforce(mdp, vt.greedy_action, horizon);

  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> policy(mdp.num_states);
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      std::vector<int> feas;
      for (std::size_t a = 0; a < mdp.num_actions; ++a)
        if (mdp.feasible(s, a)) feas.push_back(static_cast<int>(a));
      policy[s] = feas[rng.uniform_int(feas.size())];
    }
    const std::vector<double> v_rand = policy_evaluate_bruteforce(mdp, policy, horizon);
    for (std::size_t s = 0; s < mdp.num_states; ++s)
      EXPECT_GE(v_greedy[s], v_rand[s] - 1e-6);
  }
}

TEST(EvaluateMdpPolicy, RunsGreedyTableInContinuousEnv) {
  const SystemConfig c = p2p_config();
  HarvestModel h;
  h.mean = 1.5;
  h.variance = 1.0;
  ChannelModel ch;
  const StateGrid grid = make_default_grid(c, h, ch, 4, 4, 3);
  const TabularMDP mdp = build_p2p_mdp(h, ch, c, grid, c.action_grid, 0.99);
  const ValueTable vt = value_iteration(mdp, 1e-8);
  const double rps = evaluate_mdp_policy(vt, grid, c.action_grid, {h, ch}, c, 20000, 7);
  EXPECT_GT(rps, 0.0);
  // harvest-rate ceiling: cannot beat spending every harvested unit on the
  // best channels; crude sanity bound
  EXPECT_LT(rps, std::log1p(c.max_transmit * 10.0));
  // determinism
  EXPECT_EQ(rps, evaluate_mdp_policy(vt, grid, c.action_grid, {h, ch}, c, 20000, 7));
}
