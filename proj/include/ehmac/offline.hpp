#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehmac/env.hpp"
#include "ehmac/matrix.hpp"

namespace ehmac {

// Non-causal finite-horizon problem: maximize (1/N) sum_n ln(1 + sum_k p g)
// subject to causality and battery capacity under the slot dynamics. Waste
// variables make battery overflow representable inside a convex polytope.

struct OfflineInstance {
  std::size_t horizon = 0;  // N
  std::size_t num_nodes = 0;
  Matrix harvest;           // N x K
  Matrix gains;             // N x K
  std::vector<double> initial_battery;  // per node
  SystemConfig config;

  void validate() const {
    if (horizon == 0 || num_nodes == 0)
      throw std::invalid_argument("OfflineInstance: empty horizon or node set");
    if (harvest.rows != horizon || harvest.cols != num_nodes || !harvest.same_shape(gains))
      throw std::invalid_argument("OfflineInstance: inconsistent dimensions");
    if (initial_battery.size() != num_nodes)
      throw std::invalid_argument("OfflineInstance: initial battery length");
    for (double e : harvest.data)
      if (e < 0.0) throw std::invalid_argument("OfflineInstance: negative harvest");
    for (double g : gains.data)
      if (g < 0.0) throw std::invalid_argument("OfflineInstance: negative gain");
  }
};

struct SolverSettings {
  double tol = 1e-8;           // relative objective improvement
  int max_iters = 10000;
  double armijo_sigma = 1e-4;
  double dykstra_tol = 1e-12;  // max coordinate displacement per cycle
  int dykstra_max_sweeps = 600;
  std::vector<double>* objective_trace = nullptr;  // per-iteration values, for audits
};

struct OfflineSolution {
  Matrix powers;   // N x K
  Matrix waste;    // N x K
  double objective_per_slot = 0.0;  // nats per slot
  int iterations = 0;
  double residual = 0.0;  // last relative improvement
  bool converged = false;
};

// Per-node polytope in (p_1..p_N, w_1..w_N): for every prefix t,
//   sum_{n<=t} (p_n + w_n) <= B_1 + sum_{n<t} e_n      (causality)
//   sum_{n<=t} (p_n + w_n) >= B_1 + sum_{n<=t} e_n - B_max  (capacity)
// plus 0 <= p <= P_max and w >= 0.
struct NodeFeasibleRegion {
  std::vector<double> causality_rhs;  // upper bound on prefix sums
  std::vector<double> capacity_lhs;   // lower bound on prefix sums
  double p_max = 0.0;
};

inline std::vector<NodeFeasibleRegion> build_feasible_region(const OfflineInstance& inst) {
  inst.validate();
  const std::size_t N = inst.horizon, K = inst.num_nodes;
  std::vector<NodeFeasibleRegion> region(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& r = region[k];
    r.p_max = inst.config.max_transmit;
    r.causality_rhs.resize(N);
    r.capacity_lhs.resize(N);
    double cum_e = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
      r.causality_rhs[t] = inst.initial_battery[k] + cum_e;  // harvest up to t-1
      cum_e += inst.harvest(t, k);
      r.capacity_lhs[t] = inst.initial_battery[k] + cum_e - inst.config.battery_capacity;
    }
  }
  return region;
}

namespace detail {

// Dykstra's alternating projections onto the node polytope. Half-space
// corrections are scalar multiples of the (uniform prefix) normals; the box
// keeps a full correction vector and is projected last so box bounds hold
// exactly on exit.
inline void project_node(std::vector<double>& x, const NodeFeasibleRegion& r,
                         const SolverSettings& st) {
  const std::size_t N = r.causality_rhs.size();
  std::vector<double> cause_corr(N, 0.0), cap_corr(N, 0.0);
  std::vector<double> box_corr(2 * N, 0.0);
  std::vector<double> prev(x);

  for (int sweep = 0; sweep < st.dykstra_max_sweeps; ++sweep) {
    for (std::size_t t = 0; t < N; ++t) {
      // causality: prefix sum <= rhs. Normal has 2(t+1) unit entries.
      const double norm_sq = 2.0 * static_cast<double>(t + 1);
      double s = 0.0;
      for (std::size_t n = 0; n <= t; ++n) s += x[n] + x[N + n];
      s += cause_corr[t] * norm_sq;  // add back previous correction
      const double lambda = std::max(0.0, (s - r.causality_rhs[t]) / norm_sq);
      const double delta = cause_corr[t] - lambda;
      if (delta != 0.0)
        for (std::size_t n = 0; n <= t; ++n) {
          x[n] += delta;
          x[N + n] += delta;
        }
      cause_corr[t] = lambda;
    }
    for (std::size_t t = 0; t < N; ++t) {
      // capacity: prefix sum >= lhs.
      const double norm_sq = 2.0 * static_cast<double>(t + 1);
      double s = 0.0;
      for (std::size_t n = 0; n <= t; ++n) s += x[n] + x[N + n];
      s -= cap_corr[t] * norm_sq;
      const double lambda = std::max(0.0, (r.capacity_lhs[t] - s) / norm_sq);
      const double delta = lambda - cap_corr[t];
      if (delta != 0.0)
        for (std::size_t n = 0; n <= t; ++n) {
          x[n] += delta;
          x[N + n] += delta;
        }
      cap_corr[t] = lambda;
    }
    for (std::size_t i = 0; i < 2 * N; ++i) {
      const double z = x[i] + box_corr[i];
      const double lo = 0.0;
      const double hi = i < N ? r.p_max : std::numeric_limits<double>::infinity();
      const double proj = std::min(std::max(z, lo), hi);
      box_corr[i] = z - proj;
      x[i] = proj;
    }
    double disp = 0.0;
    for (std::size_t i = 0; i < 2 * N; ++i) disp = std::max(disp, std::abs(x[i] - prev[i]));
    if (disp < st.dykstra_tol) break;
    prev = x;
  }
}

}  // namespace detail

// sum_n ln(1 + sum_k p_nk g_nk).
inline double objective(const Matrix& powers, const Matrix& gains) {
  if (!powers.same_shape(gains)) throw std::invalid_argument("objective: shape mismatch");
  double total = 0.0;
  for (std::size_t n = 0; n < powers.rows; ++n)
    total += std::log1p(dot(powers.row(n), gains.row(n), powers.cols));
  return total;
}

// Battery trajectory replayed under P with minimal waste (overflow only).
inline Matrix replay_batteries(const OfflineInstance& inst, const Matrix& powers) {
  Matrix b(inst.horizon, inst.num_nodes, 0.0);
  for (std::size_t k = 0; k < inst.num_nodes; ++k) {
    double level = inst.initial_battery[k];
    for (std::size_t n = 0; n < inst.horizon; ++n) {
      b(n, k) = level;
      level = battery_step(level, inst.harvest(n, k), powers(n, k),
                           inst.config.battery_capacity);
    }
  }
  return b;
}

struct FeasibilityViolation {
  std::size_t node = 0, slot = 0;
  std::string kind;
  double amount = 0.0;
};

struct FeasibilityReport {
  std::vector<FeasibilityViolation> violations;
  double max_violation = 0.0;
  bool feasible() const { return violations.empty(); }
};

// Checks the returned powers against the slot dynamics (Eq.-style replay with
// minimal waste), not against the polytope algebra, so the two routes stay
// independent.
inline FeasibilityReport verify_feasibility(const Matrix& powers, const OfflineInstance& inst,
                                            double tol = 1e-6) {
  FeasibilityReport report;
  auto flag = [&](std::size_t k, std::size_t n, const char* kind, double amount) {
    if (amount > tol) {
      report.violations.push_back({k, n, kind, amount});
      report.max_violation = std::max(report.max_violation, amount);
    }
  };
  const Matrix batteries = replay_batteries(inst, powers);
  for (std::size_t k = 0; k < inst.num_nodes; ++k)
    for (std::size_t n = 0; n < inst.horizon; ++n) {
      const double p = powers(n, k);
      flag(k, n, "negative_power", -p);
      flag(k, n, "above_p_max", p - inst.config.max_transmit);
      flag(k, n, "above_battery", p - batteries(n, k));
    }
  return report;
}

inline OfflineSolution solve_offline(const OfflineInstance& inst,
                                     const SolverSettings& settings = {}) {
  inst.validate();
  const std::size_t N = inst.horizon, K = inst.num_nodes;
  const auto region = build_feasible_region(inst);

  // Start from p = 0 with waste soaking the forced overflow; always feasible.
  std::vector<std::vector<double>> x(K, std::vector<double>(2 * N, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    double level = inst.initial_battery[k];
    for (std::size_t n = 0; n < N; ++n) {
      const double unclamped = level + inst.harvest(n, k);
      const double next = std::min(unclamped, inst.config.battery_capacity);
      x[k][N + n] = unclamped - next;  // overflow dumped as waste
      level = next;
    }
  }

  auto pack_powers = [&](const std::vector<std::vector<double>>& xs) {
    Matrix p(N, K, 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t n = 0; n < N; ++n) p(n, k) = xs[k][n];
    return p;
  };

  Matrix powers = pack_powers(x);
  double f = objective(powers, inst.gains);
  if (settings.objective_trace) settings.objective_trace->push_back(f);

  OfflineSolution sol;
  sol.residual = 1.0;
  int iter = 0;
  // Spectral (Barzilai-Borwein) seed for the backtracking step; plain
  // gradient steps crawl on the long constrained tail.
  double bb_step = 1.0;
  std::vector<std::vector<double>> grad_prev, x_prev;
  for (; iter < settings.max_iters; ++iter) {
    // Gradient wrt p only; waste never enters the objective.
    std::vector<std::vector<double>> grad(K, std::vector<double>(2 * N, 0.0));
    for (std::size_t n = 0; n < N; ++n) {
      const double denom = 1.0 + dot(powers.row(n), inst.gains.row(n), K);
      for (std::size_t k = 0; k < K; ++k) grad[k][n] = inst.gains(n, k) / denom;
    }
    if (!x_prev.empty()) {
      double dx_dx = 0.0, dx_dg = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < 2 * N; ++i) {
          const double dx = x[k][i] - x_prev[k][i];
          dx_dx += dx * dx;
          dx_dg += dx * (grad_prev[k][i] - grad[k][i]);
        }
      bb_step = dx_dg > 1e-16 ? std::clamp(dx_dx / dx_dg, 1e-8, 1e8) : 1e4;
    }

    double step = bb_step;
    bool accepted = false;
    std::vector<std::vector<double>> cand;
    double f_cand = f;
    double displacement = 0.0;
    for (int halvings = 0; halvings < 60; ++halvings) {
      cand = x;
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < 2 * N; ++i) cand[k][i] += step * grad[k][i];
        detail::project_node(cand[k], region[k], settings);
      }
      const Matrix p_cand = pack_powers(cand);
      f_cand = objective(p_cand, inst.gains);
      double descent = 0.0;
      displacement = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < 2 * N; ++i) {
          const double d = cand[k][i] - x[k][i];
          descent += grad[k][i] * d;
          displacement = std::max(displacement, std::abs(d));
        }
      if (f_cand - f >= settings.armijo_sigma * descent && f_cand >= f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {  // no ascent step exists: stationary point
      sol.converged = true;
      sol.residual = 0.0;
      break;
    }
    x_prev = x;
    grad_prev = std::move(grad);
    x = std::move(cand);
    powers = pack_powers(x);
    const double rel = (f_cand - f) / std::max(1.0, std::abs(f));
    f = f_cand;
    if (settings.objective_trace) settings.objective_trace->push_back(f);
    sol.residual = rel;
    if (rel < settings.tol || displacement < 1e-10) {
      sol.converged = true;
      ++iter;
      break;
    }
  }

  // Exact repair: the finite-sweep projection can leave slack at the 1e-8
  // scale, so clamp each power against the replayed battery. Clamping only
  // ever lowers p, which keeps later slots feasible.
  for (std::size_t k = 0; k < K; ++k) {
    double level = inst.initial_battery[k];
    for (std::size_t n = 0; n < N; ++n) {
      powers(n, k) = std::min({std::max(powers(n, k), 0.0), level, inst.config.max_transmit});
      level = battery_step(level, inst.harvest(n, k), powers(n, k),
                           inst.config.battery_capacity);
    }
  }
  sol.powers = powers;
  sol.waste = Matrix(N, K, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t n = 0; n < N; ++n) sol.waste(n, k) = x[k][N + n];
  sol.objective_per_slot = objective(powers, inst.gains) / static_cast<double>(N);
  sol.iterations = iter;
  return sol;
}

inline OfflineInstance random_instance(std::size_t horizon, const EnvModels& models,
                                       const SystemConfig& config, Rng& rng) {
  OfflineInstance inst;
  inst.horizon = horizon;
  inst.num_nodes = config.num_nodes;
  inst.harvest = Matrix(horizon, config.num_nodes);
  inst.gains = Matrix(horizon, config.num_nodes);
  inst.initial_battery.assign(config.num_nodes, config.initial_battery);
  inst.config = config;
  for (std::size_t n = 0; n < horizon; ++n)
    for (std::size_t k = 0; k < config.num_nodes; ++k) {
      inst.harvest(n, k) = sample_harvest(models.harvest, rng);
      inst.gains(n, k) = sample_channel(models.channel, rng);
    }
  return inst;
}

// Supervised record: (E_n, B_n, G_n) -> P*_n, flattened per node blocks.
struct DataRecord {
  std::vector<double> input;   // 3K: e_1..e_K, B_1..B_K, g_1..g_K
  std::vector<double> target;  // K
};

struct Dataset {
  std::size_t num_nodes = 0;
  std::size_t horizon = 0;
  std::vector<DataRecord> records;
};

struct DatasetGenLog {
  std::size_t instances_solved = 0;
  std::size_t instances_dropped = 0;
};

inline Dataset generate_dataset(std::size_t count, std::size_t horizon, const EnvModels& models,
                                const SystemConfig& config, Rng& rng,
                                const SolverSettings& settings = {},
                                DatasetGenLog* log = nullptr) {
  if (count == 0) throw std::invalid_argument("generate_dataset: count must be >= 1");
  Dataset ds;
  ds.num_nodes = config.num_nodes;
  ds.horizon = horizon;
  ds.records.reserve(count * horizon);
  for (std::size_t i = 0; i < count; ++i) {
    Rng sub = rng.substream(i);
    const OfflineInstance inst = random_instance(horizon, models, config, sub);
    const OfflineSolution sol = solve_offline(inst, settings);
    if (!sol.converged) {
      if (log) ++log->instances_dropped;
      continue;
    }
    if (log) ++log->instances_solved;
    const Matrix batteries = replay_batteries(inst, sol.powers);
    for (std::size_t n = 0; n < horizon; ++n) {
      DataRecord rec;
      rec.input.resize(3 * config.num_nodes);
      rec.target.resize(config.num_nodes);
      for (std::size_t k = 0; k < config.num_nodes; ++k) {
        rec.input[k] = inst.harvest(n, k);
        rec.input[config.num_nodes + k] = batteries(n, k);
        rec.input[2 * config.num_nodes + k] = inst.gains(n, k);
        // Offline optima can exceed the replayed battery by projection slack;
        // clamp so every stored target is feasible for its stored state.
        rec.target[k] = std::min(std::max(sol.powers(n, k), 0.0),
                                 std::min(batteries(n, k), config.max_transmit));
      }
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << "# K=" << ds.num_nodes << " N=" << ds.horizon << " energy_unit=1e-2J\n";
  auto col = [&](const char* base, std::size_t k) {
    out << base << '_' << (k + 1);
  };
  for (std::size_t k = 0; k < ds.num_nodes; ++k) { col("e", k); out << ','; }
  for (std::size_t k = 0; k < ds.num_nodes; ++k) { col("B", k); out << ','; }
  for (std::size_t k = 0; k < ds.num_nodes; ++k) { col("g", k); out << ','; }
  for (std::size_t k = 0; k < ds.num_nodes; ++k) {
    col("p", k);
    out << (k + 1 == ds.num_nodes ? '\n' : ',');
  }
  char buf[32];
  auto emit = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << sep;
  };
  for (const auto& rec : ds.records) {
    for (std::size_t i = 0; i < rec.input.size(); ++i) emit(rec.input[i], ',');
    for (std::size_t i = 0; i < rec.target.size(); ++i)
      emit(rec.target[i], i + 1 == rec.target.size() ? '\n' : ',');
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  Dataset ds;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# K=", 0) != 0)
    throw std::runtime_error("load_dataset: missing header");
  std::sscanf(line.c_str(), "# K=%zu N=%zu", &ds.num_nodes, &ds.horizon);
  std::getline(in, line);  // column names
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    DataRecord rec;
    rec.input.reserve(3 * ds.num_nodes);
    rec.target.reserve(ds.num_nodes);
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 4 * ds.num_nodes)
      throw std::runtime_error("load_dataset: bad row width");
    rec.input.assign(vals.begin(), vals.begin() + 3 * ds.num_nodes);
    rec.target.assign(vals.begin() + 3 * ds.num_nodes, vals.end());
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace ehmac
