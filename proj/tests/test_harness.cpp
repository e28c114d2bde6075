#include "ehmac/experiment.hpp"

#include <fstream>
#include <gtest/gtest.h>
#include <sstream>

using namespace ehmac;

namespace {

nlohmann::json tiny_offline_config() {
  return nlohmann::json{
      {"scenario", "tiny-offline"},
      {"pipeline", "offline"},
      {"system",
       {{"num_nodes", 2}, {"battery_capacity", 20.0}, {"max_transmit", 15.0},
        {"action_levels", 16}, {"initial_battery", 10.0}}},
      {"harvest", {{"mean", 4.0}, {"variance", 3.5}}},
      {"offline", {{"instances", 4}, {"eval_instances", 4}, {"horizon", 5}}},
      {"seeds", {1, 2}},
  };
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, ParsesAndAppliesDefaults) {
  const ExperimentConfig cfg = parse_experiment_config(tiny_offline_config());
  EXPECT_EQ(cfg.scenario, "tiny-offline");
  EXPECT_EQ(cfg.system.num_nodes, 2u);
  EXPECT_EQ(cfg.system.action_grid.size(), 16u);
  EXPECT_DOUBLE_EQ(cfg.system.action_grid.back(), 15.0);
  EXPECT_DOUBLE_EQ(cfg.harvest.variance, 3.5);
  EXPECT_EQ(cfg.grid.gain_bins, 8u);       // defaults
  EXPECT_EQ(cfg.mfmarl.max_iteration_slots, 1000);
  EXPECT_EQ(cfg.seeds.size(), 2u);
  // default MDP action set counts integer steps 0..P_max
  EXPECT_EQ(cfg.mdp_action_set.size(), 16u);
}

TEST(Config, RejectsUnknownKeys) {
  nlohmann::json j = tiny_offline_config();
  j["mystery"] = 1;
  EXPECT_THROW(parse_experiment_config(j), std::runtime_error);

  nlohmann::json nested = tiny_offline_config();
  nested["harvest"]["stddev"] = 2.0;
  try {
    parse_experiment_config(nested);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("stddev"), std::string::npos);
  }
}

TEST(Config, RejectsBadEnums) {
  nlohmann::json j = tiny_offline_config();
  j["harvest"]["truncation_mode"] = "wrap";
  EXPECT_THROW(parse_experiment_config(j), std::runtime_error);
  j = tiny_offline_config();
  j["channel"] = {{"family", "nakagami"}};
  EXPECT_THROW(parse_experiment_config(j), std::runtime_error);
}

TEST(Metrics, CsvShapeAndHeaderOnlyFile) {
  const std::string path = testing::TempDir() + "metrics_empty.csv";
  emit_csv({}, path);
  const std::string content = slurp(path);
  EXPECT_EQ(content, std::string(kMetricsHeader) + "\n");

  MetricsRecord r;
  r.scenario = "s";
  r.method = "offline";
  r.harvest_mean = 4.0;
  r.harvest_variance = 3.5;
  r.num_nodes = 5;
  r.seed = 1;
  r.rps = 3.14;
  r.percent_of_reference = 100.0;
  const std::string path2 = testing::TempDir() + "metrics_one.csv";
  emit_csv({r}, path2);
  const std::string body = slurp(path2);
  // fixed arity: the row carries exactly as many columns as the header
  const std::string header(kMetricsHeader);
  EXPECT_EQ(std::count(body.begin(), body.end(), ','),
            2 * std::count(header.begin(), header.end(), ','));
}

TEST(Metrics, JsonRoundTripIsLossless) {
  std::vector<MetricsRecord> records(2);
  records[0].scenario = "a";
  records[0].method = "offline";
  records[0].harvest_mean = 4.25;
  records[0].harvest_variance = 3.5;
  records[0].num_nodes = 5;
  records[0].seed = 7;
  records[0].rps = 3.123456789012345;
  records[0].percent_of_reference = 100.0;
  records[0].wall_time_s = 1.25;
  records[1] = records[0];
  records[1].method = "central-dnn";
  records[1].rps = 2.87;
  records[1].percent_of_reference = 91.9;

  const nlohmann::json j = metrics_to_json(records, /*include_timing=*/true);
  const std::vector<MetricsRecord> back = metrics_from_json(j);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].scenario, records[i].scenario);
    EXPECT_EQ(back[i].method, records[i].method);
    EXPECT_EQ(back[i].rps, records[i].rps);  // bitwise
    EXPECT_EQ(back[i].percent_of_reference, records[i].percent_of_reference);
    EXPECT_EQ(back[i].wall_time_s, records[i].wall_time_s);
  }
}

TEST(Metrics, RejectsNegativeRps) {
  MetricsRecord r;
  r.rps = -0.1;
  EXPECT_THROW(r.validate(), std::invalid_argument);
}

TEST(RunScenario, OfflinePipelineRecordCount) {
  const ExperimentConfig cfg = parse_experiment_config(tiny_offline_config());
  const ScenarioResult res = run_scenario(cfg);
  ASSERT_EQ(res.records.size(), 2u);  // one offline record per seed
  for (const auto& r : res.records) {
    EXPECT_EQ(r.method, "offline");
    EXPECT_GT(r.rps, 0.0);
    EXPECT_DOUBLE_EQ(r.percent_of_reference, 100.0);
  }
}

TEST(RunScenario, DeterministicByteForByteRerun) {
  const ExperimentConfig cfg = parse_experiment_config(tiny_offline_config());
  const ScenarioResult a = run_scenario(cfg);
  const ScenarioResult b = run_scenario(cfg);
  const std::string pa = testing::TempDir() + "det_a.csv";
  const std::string pb = testing::TempDir() + "det_b.csv";
  emit_csv(a.records, pa);
  emit_csv(b.records, pb);
  EXPECT_EQ(slurp(pa), slurp(pb));
  const nlohmann::json ja = metrics_to_json(a.records), jb = metrics_to_json(b.records);
  EXPECT_EQ(ja.dump(), jb.dump());
}

TEST(Sweep, AxisExpansionAndAggregation) {
  const SweepResult res = sweep(tiny_offline_config(), "harvest.mean", {4.0, 6.0, 8.0});
  // 3 axis values x 2 seeds x 1 record
  ASSERT_EQ(res.records.size(), 6u);
  ASSERT_TRUE(res.artifacts.count("sweep_summary.csv"));
  const std::string& summary = res.artifacts.at("sweep_summary.csv");
  EXPECT_NE(summary.find("harvest.mean"), std::string::npos);
  // offline RPS grows with the harvest mean (seed-averaged)
  std::map<double, double> mean_by_value;
  for (const auto& r : res.records) mean_by_value[r.harvest_mean] += r.rps / 2.0;
  EXPECT_LT(mean_by_value[4.0], mean_by_value[6.0]);
  EXPECT_LT(mean_by_value[6.0], mean_by_value[8.0]);
}

TEST(Sweep, AppliesNestedAxisValues) {
  nlohmann::json j = tiny_offline_config();
  apply_axis_value(j, "system.num_nodes", 3);
  EXPECT_EQ(j["system"]["num_nodes"].get<int>(), 3);
  apply_axis_value(j, "eval_slots", 123);
  EXPECT_EQ(j["eval_slots"].get<int>(), 123);
}

TEST(RunScenario, MfmarlPipelineEmitsHistoryArtifact) {
  nlohmann::json j = tiny_offline_config();
  j["scenario"] = "tiny-mfmarl";
  j["pipeline"] = "mfmarl";
  j["seeds"] = {5};
  j["system"]["action_levels"] = 4;
  j["grid"] = {{"battery_bins", 2}, {"gain_bins", 2}, {"harvest_bins", 2}};
  j["offline"] = {{"instances", 3}, {"eval_instances", 2}, {"horizon", 4}};
  j["training"] = {{"epochs", 2}, {"hidden_layers", 2}};
  j["dqn"] = {{"hidden_layers", 2}, {"first_hidden", 8}, {"batch_size", 8},
              {"replay_capacity", 64}};
  j["mfmarl"] = {{"max_iteration_slots", 30}, {"min_estimation_slots", 5},
                 {"max_total_slots", 90}, {"max_iterations", 3}, {"eval_slots", 50}};
  j["eval_slots"] = 200;
  const ExperimentConfig cfg = parse_experiment_config(j);
  const ScenarioResult res = run_scenario(cfg);
  ASSERT_EQ(res.records.size(), 2u);  // central reference + mfmarl
  EXPECT_EQ(res.records[0].method, "central-dnn");
  EXPECT_EQ(res.records[1].method, "mfmarl");
  const std::string key = "tiny-mfmarl_mfmarl_seed5_history.csv";
  ASSERT_TRUE(res.artifacts.count(key));
  std::stringstream ss(res.artifacts.at(key));
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "slot,iteration,rps_nats,belief_drift_l2,epsilon,reward_mode");
  long rows = 0;
  for (std::string line; std::getline(ss, line);)
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 90);  // one row per training slot
}
