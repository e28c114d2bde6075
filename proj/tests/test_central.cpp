#include "ehmac/central_policy.hpp"

#include <cmath>
#include <gtest/gtest.h>

using namespace ehmac;

namespace {

SystemConfig config_for(std::size_t k) {
  SystemConfig c;
  c.num_nodes = k;
  c.battery_capacity = 20.0;
  c.max_transmit = 15.0;
  c.action_grid = uniform_action_grid(15.0, 31);
  c.initial_battery = 10.0;
  return c;
}

// Net that ignores its input and emits fixed outputs via output biases.
CentralPolicy constant_policy(const SystemConfig& config, const std::vector<double>& outs) {
  CentralPolicy p;
  p.config = config;
  const std::size_t k = config.num_nodes;
  MLPArchitecture a = dense_arch(3 * k, {4}, k, Activation::kLinear);
  p.net.arch = a;
  p.net.weights.emplace_back(4, 3 * k, 0.0);
  p.net.biases.emplace_back(4, 0.0);
  p.net.weights.emplace_back(k, 4, 0.0);
  p.net.biases.push_back(outs);
  return p;
}

}  // namespace

TEST(BuildCentralArch, PaperProfileWidths) {
  const MLPArchitecture a = build_central_arch(5, 30);
  ASSERT_EQ(a.layer_sizes.size(), 32u);  // input + 30 hidden + output
  EXPECT_EQ(a.layer_sizes[0], 15u);
  EXPECT_EQ(a.layer_sizes[1], 150u);
  EXPECT_EQ(a.layer_sizes[2], 150u);
  EXPECT_EQ(a.layer_sizes[3], 140u);
  EXPECT_EQ(a.layer_sizes[4], 140u);
  EXPECT_EQ(a.layer_sizes[30], 10u);  // 30K - 14*2K = 2K
  EXPECT_EQ(a.layer_sizes.back(), 5u);
  for (std::size_t l = 0; l + 1 < a.activations.size(); ++l)
    EXPECT_EQ(a.activations[l], Activation::kLeakyRelu);
  EXPECT_EQ(a.activations.back(), Activation::kLinear);
}

TEST(BuildCentralArch, SmallProfileAndGuard) {
  const MLPArchitecture a = build_central_arch(1, 6);
  ASSERT_EQ(a.layer_sizes.size(), 8u);
  EXPECT_EQ(a.layer_sizes[0], 3u);
  EXPECT_EQ(a.layer_sizes[1], 30u);
  EXPECT_EQ(a.layer_sizes.back(), 1u);
  // the shrink rule exhausts the width for very deep stacks
  EXPECT_THROW(build_central_arch(5, 32), std::invalid_argument);
}

TEST(ActCentral, ClampsToFeasibleBox) {
  const SystemConfig c = config_for(2);
  const CentralPolicy p = constant_policy(c, {20.0, -5.0});
  JointState js;
  js.per_node = {NodeState{3.0, 1.0, 2.0}, NodeState{10.0, 0.5, 1.0}};
  const std::vector<double> out = act_central(p, js);
  EXPECT_DOUBLE_EQ(out[0], 3.0);  // raw 20 clamped to battery
  EXPECT_DOUBLE_EQ(out[1], 0.0);  // raw negative clamped to zero
}

TEST(ActCentral, FeasibilitySweep) {
  const SystemConfig c = config_for(3);
  Rng rng(55);
  CentralPolicy p;
  p.config = c;
  p.net = init_params(build_central_arch(3, 4), rng);
  for (int i = 0; i < 10000; ++i) {
    JointState js;
    js.per_node.resize(3);
    for (auto& s : js.per_node) {
      s.battery = rng.uniform(0.0, c.battery_capacity);
      s.gain = rng.exponential(1.0);
      s.harvest = rng.uniform(0.0, 10.0);
    }
    const std::vector<double> out = act_central(p, js);
    for (std::size_t k = 0; k < 3; ++k) {
      ASSERT_GE(out[k], 0.0);
      ASSERT_LE(out[k], feasible_power_bound(js.per_node[k], c) + 1e-12);
    }
  }
}

TEST(EvaluatePolicy, ZeroActorScoresZero) {
  const SystemConfig c = config_for(2);
  const Actor zero = [](const JointState& js) {
    return std::vector<double>(js.per_node.size(), 0.0);
  };
  EXPECT_DOUBLE_EQ(evaluate_policy(zero, {}, c, 500, 7), 0.0);
}

TEST(EvaluatePolicy, GreedyUnitRateRenewalOracle) {
  // constant e = 1, g = 1, greedy p = min(B, 1): the battery self-renews and
  // every slot earns ln 2
  SystemConfig c = config_for(1);
  HarvestModel h;
  h.mean = 1.0;
  h.variance = 1e-18;
  ChannelModel ch;
  ch.family = ChannelFamily::kDiscreteLevels;
  ch.level_set = {1.0};
  const Actor greedy = [&c](const JointState& js) {
    return std::vector<double>{std::min(js.per_node[0].battery, 1.0)};
  };
  const double rps = evaluate_policy(greedy, {h, ch}, c, 10000, 3);
  EXPECT_NEAR(rps, std::log(2.0), 1e-3);
}

TEST(EvaluatePolicy, DeterministicGivenSeed) {
  const SystemConfig c = config_for(2);
  Rng rng(77);
  CentralPolicy p;
  p.config = c;
  p.net = init_params(build_central_arch(2, 4), rng);
  const Actor actor = [&p](const JointState& js) { return act_central(p, js); };
  HarvestModel h;
  h.mean = 4.0;
  h.variance = 3.5;
  const double a = evaluate_policy(actor, {h, {}}, c, 2000, 123);
  const double b = evaluate_policy(actor, {h, {}}, c, 2000, 123);
  EXPECT_EQ(a, b);  // bitwise
}

TEST(TrainCentral, MemorizesSingleRecord) {
  const SystemConfig c = config_for(1);
  Dataset ds;
  ds.num_nodes = 1;
  ds.horizon = 1;
  DataRecord rec;
  rec.input = {2.0, 8.0, 1.5};
  rec.target = {4.0};
  for (int i = 0; i < 64; ++i) ds.records.push_back(rec);
  TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 300;
  cfg.batch_size = 16;
  const CentralTrainResult res = train_central(ds, c, cfg, 0.2, 2);
  EXPECT_LT(res.val_mse, 1e-3);
}

TEST(TrainCentral, BeatsConstantPredictorOnSolverData) {
  SystemConfig c = config_for(2);
  HarvestModel h;
  h.mean = 4.0;
  h.variance = 3.5;
  Rng rng(91);
  const Dataset ds = generate_dataset(60, 8, {h, {}}, c, rng);
  TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 60;
  const CentralTrainResult res = train_central(ds, c, cfg, 0.2, 4);
  EXPECT_GT(res.target_variance, 0.0);
  EXPECT_LT(res.val_mse, res.target_variance);
}

TEST(CentralCheckpoint, RoundTripPreservesBehavior) {
  const SystemConfig c = config_for(2);
  Rng rng(101);
  CentralPolicy p;
  p.config = c;
  p.net = init_params(build_central_arch(2, 4), rng);
  Matrix x(20, 6);
  for (double& v : x.data) v = rng.uniform(0.0, 10.0);
  p.norm.fit(x);

  const std::string path = testing::TempDir() + "central_ckpt.json";
  save_central_policy(p, path);
  const CentralPolicy q = load_central_policy(path);

  JointState js;
  js.per_node = {NodeState{5.0, 1.2, 3.0}, NodeState{12.0, 0.4, 6.0}};
  const std::vector<double> a = act_central(p, js), b = act_central(q, js);
  for (std::size_t k = 0; k < 2; ++k) ASSERT_EQ(a[k], b[k]);  // bitwise
}

// Diagnostic, not a contract: the trained net is not permutation-equivariant
// by construction; log how far it deviates.
TEST(CentralPolicy, PermutationConsistencyDiagnostic) {
  const SystemConfig c = config_for(2);
  Rng rng(111);
  CentralPolicy p;
  p.config = c;
  p.net = init_params(build_central_arch(2, 4), rng);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    JointState js;
    js.per_node = {NodeState{rng.uniform(0.0, 20.0), rng.exponential(1.0), rng.uniform(0.0, 8.0)},
                   NodeState{rng.uniform(0.0, 20.0), rng.exponential(1.0), rng.uniform(0.0, 8.0)}};
    JointState swapped;
    swapped.per_node = {js.per_node[1], js.per_node[0]};
    const std::vector<double> a = act_central(p, js), b = act_central(p, swapped);
    total += std::abs(a[0] - b[1]) + std::abs(a[1] - b[0]);
    ASSERT_TRUE(std::isfinite(a[0]) && std::isfinite(b[0]));
  }
  std::cout << "[diagnostic] mean permutation deviation: " << total / 200.0 << " energy units\n";
}
