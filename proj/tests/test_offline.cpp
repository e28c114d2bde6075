#include "ehmac/offline.hpp"

#include <cmath>
#include <gtest/gtest.h>

using namespace ehmac;

namespace {

SystemConfig config_for(std::size_t k, double b_max = 20.0, double p_max = 15.0,
                        double b1 = 10.0) {
  SystemConfig c;
  c.num_nodes = k;
  c.battery_capacity = b_max;
  c.max_transmit = p_max;
  c.action_grid = uniform_action_grid(p_max, 31);
  c.initial_battery = b1;
  return c;
}

OfflineInstance make_instance(std::size_t n, std::size_t k, const std::vector<double>& e,
                              const std::vector<double>& g, double b1,
                              const SystemConfig& config) {
  OfflineInstance inst;
  inst.horizon = n;
  inst.num_nodes = k;
  inst.harvest = Matrix(n, k);
  inst.gains = Matrix(n, k);
  std::copy(e.begin(), e.end(), inst.harvest.data.begin());
  std::copy(g.begin(), g.end(), inst.gains.data.begin());
  inst.initial_battery.assign(k, b1);
  inst.config = config;
  return inst;
}

// Exhaustive grid search over feasible power schedules; feasibility checked
// by replaying the battery recursion. Independent of the solver internals.
double grid_oracle(const OfflineInstance& inst, double step) {
  const std::size_t cells = inst.horizon * inst.num_nodes;
  const std::size_t levels = static_cast<std::size_t>(inst.config.max_transmit / step) + 1;
  std::vector<std::size_t> choice(cells, 0);
  Matrix p(inst.horizon, inst.num_nodes);
  double best = -1.0;
  while (true) {
    for (std::size_t i = 0; i < cells; ++i) p.data[i] = step * choice[i];
    if (verify_feasibility(p, inst, 1e-9).feasible())
      best = std::max(best, objective(p, inst.gains));
    std::size_t i = 0;
    for (; i < cells; ++i) {
      if (++choice[i] < levels) break;
      choice[i] = 0;
    }
    if (i == cells) break;
  }
  return best;
}

EnvModels desk_models() {
  HarvestModel h;
  h.mean = 4.0;
  h.variance = 3.5;
  return EnvModels{h, {}};
}

}  // namespace

TEST(FeasibleRegion, HandConstraints) {
  const SystemConfig c = config_for(1);
  const auto r1 = build_feasible_region(make_instance(1, 1, {7.0}, {1.0}, 2.0, c));
  EXPECT_DOUBLE_EQ(r1[0].causality_rhs[0], 2.0);  // p1 + w1 <= B1

  const auto r2 = build_feasible_region(make_instance(2, 1, {0.0, 0.0}, {1.0, 1.0}, 2.0, c));
  EXPECT_DOUBLE_EQ(r2[0].causality_rhs[0], 2.0);
  EXPECT_DOUBLE_EQ(r2[0].causality_rhs[1], 2.0);  // telescoped: p1+p2 <= 2
  EXPECT_DOUBLE_EQ(r2[0].p_max, 15.0);
}

TEST(FeasibleRegion, ZeroWithWasteIsAlwaysFeasible) {
  const SystemConfig c = config_for(1, 5.0, 5.0, 5.0);
  // heavy harvest forces overflow; zero powers must still verify
  const OfflineInstance inst = make_instance(3, 1, {9.0, 9.0, 9.0}, {1.0, 1.0, 1.0}, 5.0, c);
  Matrix zero(3, 1, 0.0);
  EXPECT_TRUE(verify_feasibility(zero, inst, 1e-9).feasible());
}

TEST(Objective, HandValues) {
  Matrix p(2, 1, 0.0), g(2, 1, 1.0);
  EXPECT_DOUBLE_EQ(objective(p, g), 0.0);
  p(0, 0) = 1.0;
  EXPECT_NEAR(objective(p, g), std::log(2.0), 1e-12);

  // matches the sum of per-slot rates
  Matrix p2(3, 2), g2(3, 2);
  Rng rng(3);
  for (double& x : p2.data) x = rng.uniform(0.0, 5.0);
  for (double& x : g2.data) x = rng.uniform(0.0, 2.0);
  double slot_total = 0.0;
  for (std::size_t n = 0; n < 3; ++n)
    slot_total += slot_sum_rate(p2.row_span(n), g2.row_span(n));
  EXPECT_NEAR(objective(p2, g2), slot_total, 1e-12);
}

TEST(SolveOffline, SymmetricSplit) {
  const SystemConfig c = config_for(1, 20.0, 15.0, 2.0);
  const OfflineInstance inst = make_instance(2, 1, {0.0, 0.0}, {1.0, 1.0}, 2.0, c);
  const OfflineSolution sol = solve_offline(inst);
  EXPECT_TRUE(sol.converged);
  EXPECT_NEAR(sol.powers(0, 0), 1.0, 1e-3);
  EXPECT_NEAR(sol.powers(1, 0), 1.0, 1e-3);
  EXPECT_NEAR(sol.objective_per_slot, std::log(2.0), 1e-6);
}

TEST(SolveOffline, KktHandCase) {
  // maximize ln(1+2 p1) + ln(1+p2) with p1 + p2 <= 2:
  // 2/(1+2 p1) = 1/(1+p2) gives p = (1.25, 0.75).
  const SystemConfig c = config_for(1, 20.0, 15.0, 2.0);
  const OfflineInstance inst = make_instance(2, 1, {0.0, 0.0}, {2.0, 1.0}, 2.0, c);
  const OfflineSolution sol = solve_offline(inst);
  EXPECT_NEAR(sol.powers(0, 0), 1.25, 1e-3);
  EXPECT_NEAR(sol.powers(1, 0), 0.75, 1e-3);
}

TEST(SolveOffline, BeatsGridOracleOnSmallInstances) {
  Rng rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(3);
    const std::size_t k = 1 + rng.uniform_int(2);
    const SystemConfig c = config_for(k, 3.0, 2.0, rng.uniform(0.5, 2.0));
    std::vector<double> e(n * k), g(n * k);
    for (double& x : e) x = rng.uniform(0.0, 1.5);
    for (double& x : g) x = rng.uniform(0.2, 2.5);
    const OfflineInstance inst = make_instance(n, k, e, g, c.initial_battery, c);
    const OfflineSolution sol = solve_offline(inst);
    const double step = 0.25;
    const double oracle = grid_oracle(inst, step);
    // one grid step of slack per cell, scaled by that cell's gain
    double bound = 0.0;
    for (std::size_t i = 0; i < n * k; ++i) bound += inst.gains.data[i] * step;
    EXPECT_GE(objective(sol.powers, inst.gains), oracle - bound);
    EXPECT_TRUE(verify_feasibility(sol.powers, inst, 1e-6).feasible());
  }
}

TEST(SolveOffline, MonotoneObjectiveAcrossIterations) {
  Rng rng(19);
  const SystemConfig c = config_for(2);
  std::vector<double> e(10 * 2), g(10 * 2);
  for (double& x : e) x = rng.uniform(0.0, 8.0);
  for (double& x : g) x = rng.uniform(0.0, 3.0);
  const OfflineInstance inst = make_instance(10, 2, e, g, 10.0, c);
  std::vector<double> trace;
  SolverSettings st;
  st.objective_trace = &trace;
  solve_offline(inst, st);
  ASSERT_GT(trace.size(), 1u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1] - 1e-10);
}

TEST(SolveOffline, DoublingGainsWeaklyIncreasesObjective) {
  Rng rng(23);
  const SystemConfig c = config_for(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> e(6 * 2), g(6 * 2);
    for (double& x : e) x = rng.uniform(0.0, 8.0);
    for (double& x : g) x = rng.uniform(0.1, 2.0);
    OfflineInstance inst = make_instance(6, 2, e, g, 10.0, c);
    const double base = solve_offline(inst).objective_per_slot;
    for (double& x : inst.gains.data) x *= 2.0;
    EXPECT_GE(solve_offline(inst).objective_per_slot, base - 1e-9);
  }
}

TEST(VerifyFeasibility, FlagsOverdrawAndPassesSolverOutputs) {
  const SystemConfig c = config_for(1, 20.0, 15.0, 2.0);
  const OfflineInstance inst = make_instance(2, 1, {0.0, 0.0}, {1.0, 1.0}, 2.0, c);
  Matrix p(2, 1, 0.0);
  p(0, 0) = 3.0;  // above B1 in slot 1
  const FeasibilityReport report = verify_feasibility(p, inst);
  ASSERT_FALSE(report.feasible());
  EXPECT_EQ(report.violations[0].kind, "above_battery");

  // zero schedule is always feasible
  EXPECT_TRUE(verify_feasibility(Matrix(2, 1, 0.0), inst).feasible());

  // solver outputs on random instances replay clean
  Rng rng(31);
  const EnvModels models = desk_models();
  const SystemConfig cr = config_for(2);
  for (int i = 0; i < 100; ++i) {
    Rng sub = rng.substream(i);
    const OfflineInstance ri = random_instance(6, models, cr, sub);
    const OfflineSolution sol = solve_offline(ri);
    EXPECT_TRUE(verify_feasibility(sol.powers, ri, 1e-6).feasible());
  }
}

TEST(GenerateDataset, CountsAndFeasibleTargets) {
  const SystemConfig c = config_for(2);
  const EnvModels models = desk_models();
  Rng rng(41);
  DatasetGenLog log;
  const Dataset ds = generate_dataset(25, 8, models, c, rng, {}, &log);
  EXPECT_EQ(ds.records.size(), 25u * 8u);
  EXPECT_EQ(log.instances_solved, 25u);
  EXPECT_EQ(log.instances_dropped, 0u);
  for (const DataRecord& rec : ds.records) {
    ASSERT_EQ(rec.input.size(), 6u);
    ASSERT_EQ(rec.target.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
      const double battery = rec.input[2 + k];
      EXPECT_GE(rec.target[k], 0.0);
      EXPECT_LE(rec.target[k], std::min(battery, c.max_transmit) + 1e-9);
    }
  }
}

TEST(Dataset, CsvRoundTrip) {
  const SystemConfig c = config_for(2);
  Rng rng(43);
  const Dataset ds = generate_dataset(3, 4, desk_models(), c, rng);
  const std::string path = testing::TempDir() + "ehmac_dataset.csv";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  ASSERT_EQ(back.records.size(), ds.records.size());
  EXPECT_EQ(back.num_nodes, ds.num_nodes);
  EXPECT_EQ(back.horizon, ds.horizon);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    for (std::size_t j = 0; j < ds.records[i].input.size(); ++j)
      EXPECT_DOUBLE_EQ(back.records[i].input[j], ds.records[i].input[j]);
    for (std::size_t j = 0; j < ds.records[i].target.size(); ++j)
      EXPECT_DOUBLE_EQ(back.records[i].target[j], ds.records[i].target[j]);
  }
}
