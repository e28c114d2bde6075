#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ehmac {

// One benchmark measurement. `percent_of_reference` is method-specific:
// offline is its own reference (100), the central net is measured against
// offline, and the distributed schemes against the central net.
struct MetricsRecord {
  std::string scenario;
  std::string method;  // offline|central-dnn|mfmarl|coop-q|dist-dnn|mdp
  double harvest_mean = 0.0;
  double harvest_variance = 0.0;
  std::size_t num_nodes = 0;
  std::uint64_t seed = 0;
  double rps = 0.0;  // nats per slot
  double percent_of_reference = 0.0;
  double wall_time_s = 0.0;

  void validate() const {
    if (rps < 0.0) throw std::invalid_argument("MetricsRecord: negative RPS");
  }
};

inline const char* kMetricsHeader =
    "scenario,method,harvest_mean,harvest_variance,num_nodes,seed,"
    "rps_nats_per_slot,percent_of_reference,wall_time_s";

// Wall time is only written when asked for: timing is nondeterministic and
// the default output must be byte-identical across reruns of a seed.
inline void emit_csv(const std::vector<MetricsRecord>& records, const std::string& path,
                     bool include_timing = false) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
  out << kMetricsHeader << '\n';
  char buf[128];
  for (const auto& r : records) {
    r.validate();
    out << r.scenario << ',' << r.method << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r.harvest_mean, r.harvest_variance);
    out << buf << r.num_nodes << ',' << r.seed << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r.rps, r.percent_of_reference,
                  include_timing ? r.wall_time_s : 0.0);
    out << buf;
  }
}

inline nlohmann::json metrics_to_json(const std::vector<MetricsRecord>& records,
                                      bool include_timing = false) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    r.validate();
    arr.push_back({{"scenario", r.scenario},
                   {"method", r.method},
                   {"harvest_mean", r.harvest_mean},
                   {"harvest_variance", r.harvest_variance},
                   {"num_nodes", r.num_nodes},
                   {"seed", r.seed},
                   {"rps_nats_per_slot", r.rps},
                   {"percent_of_reference", r.percent_of_reference},
                   {"wall_time_s", include_timing ? r.wall_time_s : 0.0}});
  }
  return arr;
}

inline void emit_json(const std::vector<MetricsRecord>& records, const std::string& path,
                      bool include_timing = false) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_json: cannot open " + path);
  out << metrics_to_json(records, include_timing).dump(1) << '\n';
}

inline std::vector<MetricsRecord> metrics_from_json(const nlohmann::json& arr) {
  std::vector<MetricsRecord> records;
  for (const auto& j : arr) {
    MetricsRecord r;
    r.scenario = j.at("scenario").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.harvest_mean = j.at("harvest_mean").get<double>();
    r.harvest_variance = j.at("harvest_variance").get<double>();
    r.num_nodes = j.at("num_nodes").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.rps = j.at("rps_nats_per_slot").get<double>();
    r.percent_of_reference = j.at("percent_of_reference").get<double>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ehmac
