#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "ehmac/env.hpp"
#include "ehmac/matrix.hpp"

namespace ehmac {

constexpr double kSimplexTol = 1e-12;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Finite-state grid over (battery, gain, harvest). Bins are right-open with
// the last bin right-closed; `reps` carries one representative value per bin
// (used to map discrete states back to the continuous environment).
struct StateGrid {
  std::vector<double> battery_edges, gain_edges, harvest_edges;
  std::vector<double> battery_reps, gain_reps, harvest_reps;

  std::size_t battery_bins() const { return battery_edges.size() - 1; }
  std::size_t gain_bins() const { return gain_edges.size() - 1; }
  std::size_t harvest_bins() const { return harvest_edges.size() - 1; }
  std::size_t size() const { return battery_bins() * gain_bins() * harvest_bins(); }

  std::size_t index_of(std::size_t b, std::size_t g, std::size_t h) const {
    return (b * gain_bins() + g) * harvest_bins() + h;
  }
  void unpack(std::size_t idx, std::size_t& b, std::size_t& g, std::size_t& h) const {
    h = idx % harvest_bins();
    idx /= harvest_bins();
    g = idx % gain_bins();
    b = idx / gain_bins();
  }

  // Representative continuous state of a discrete state index.
  NodeState representative(std::size_t idx) const {
    std::size_t b, g, h;
    unpack(idx, b, g, h);
    return NodeState{battery_reps[b], gain_reps[g], harvest_reps[h]};
  }

  // Gain representative per state index, laid out for per-state formulas.
  std::vector<double> state_gains() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
      std::size_t b, g, h;
      unpack(i, b, g, h);
      out[i] = gain_reps[g];
    }
    return out;
  }

  void validate() const {
    auto check = [](const std::vector<double>& edges, const std::vector<double>& reps,
                    const char* what) {
      if (edges.size() < 2) throw std::invalid_argument(std::string("StateGrid: ") + what);
      if (!std::is_sorted(edges.begin(), edges.end()))
        throw std::invalid_argument(std::string("StateGrid: unsorted edges for ") + what);
      if (reps.size() != edges.size() - 1)
        throw std::invalid_argument(std::string("StateGrid: reps/edges mismatch for ") + what);
    };
    check(battery_edges, battery_reps, "battery");
    check(gain_edges, gain_reps, "gain");
    check(harvest_edges, harvest_reps, "harvest");
  }
};

struct ClampStats {
  long clamped = 0;
};

// Right-open bin lookup; values outside the edge range clamp to the boundary
// bin (counted when a ClampStats is supplied).
inline std::size_t bin_index(const std::vector<double>& edges, double x,
                             ClampStats* stats = nullptr) {
  const std::size_t bins = edges.size() - 1;
  if (x < edges.front()) {
    if (stats) ++stats->clamped;
    return 0;
  }
  if (x >= edges.back()) {
    // The top edge itself belongs to the last bin (right-closed).
    if (x > edges.back() && stats) ++stats->clamped;
    return bins - 1;
  }
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

inline std::size_t discretize(const NodeState& s, const StateGrid& grid,
                              ClampStats* stats = nullptr) {
  const std::size_t b = bin_index(grid.battery_edges, s.battery, stats);
  const std::size_t g = bin_index(grid.gain_edges, s.gain, stats);
  const std::size_t h = bin_index(grid.harvest_edges, s.harvest, stats);
  return grid.index_of(b, g, h);
}

// Probability mass each grid bin receives under the channel law.
inline std::vector<double> channel_bin_masses(const ChannelModel& model,
                                              const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  std::vector<double> mass(bins, 0.0);
  if (model.family == ChannelFamily::kRayleighPowerGain) {
    auto cdf = [](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x); };
    for (std::size_t i = 0; i < bins; ++i) mass[i] = cdf(edges[i + 1]) - cdf(edges[i]);
    mass.front() += cdf(edges.front());          // below-range mass clamps down
    mass.back() += 1.0 - cdf(edges.back());      // upper tail clamps up
  } else {
    double total = 0.0;
    std::vector<double> w(model.level_set.size(), 1.0);
    if (!model.weights.empty()) w = model.weights;
    for (double x : w) total += x;
    ClampStats ignored;
    for (std::size_t i = 0; i < model.level_set.size(); ++i)
      mass[bin_index(edges, model.level_set[i], &ignored)] += w[i] / total;
  }
  return mass;
}

// Probability mass per bin under the truncated-Gaussian harvest law.
inline std::vector<double> harvest_bin_masses(const HarvestModel& model,
                                              const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  std::vector<double> mass(bins, 0.0);
  const double sigma = std::sqrt(std::max(model.variance, 1e-300));
  auto phi = [&](double x) { return normal_cdf((x - model.mean) / sigma); };
  if (model.truncation_mode == TruncationMode::kRejectRenormalize) {
    const double z = 1.0 - phi(0.0);
    auto cdf = [&](double x) { return x <= 0.0 ? 0.0 : (phi(x) - phi(0.0)) / z; };
    for (std::size_t i = 0; i < bins; ++i) mass[i] = cdf(edges[i + 1]) - cdf(edges[i]);
    mass.front() += cdf(std::max(edges.front(), 0.0));
    mass.back() += 1.0 - cdf(edges.back());
  } else {
    // Clip mode: an atom at zero plus the untruncated upper density.
    // P(a <= max(0,X) < b) = [0 in [a,b)] phi(0) + phi(b) - phi(max(a, 0)).
    auto bin_mass = [&](double a, double b) {
      double m = phi(b) - phi(std::max(a, 0.0));
      if (a <= 0.0 && b > 0.0) m += phi(0.0);
      return std::max(m, 0.0);
    };
    for (std::size_t i = 0; i < bins; ++i) mass[i] = bin_mass(edges[i], edges[i + 1]);
    if (edges.front() > 0.0) mass.front() += bin_mass(-1.0, edges.front());
    mass.back() += 1.0 - phi(edges.back());
  }
  return mass;
}

// Default discretization: uniform battery bins over [0, B_max], equiprobable
// gain bins (quantiles of the channel law), uniform harvest bins over
// [0, m + 4 sigma]. Gain representatives are within-bin conditional means.
inline StateGrid make_default_grid(const SystemConfig& config, const HarvestModel& harvest,
                                   const ChannelModel& channel, std::size_t battery_bins = 10,
                                   std::size_t gain_bins = 8, std::size_t harvest_bins = 8) {
  if (battery_bins == 0 || gain_bins == 0 || harvest_bins == 0)
    throw std::invalid_argument("make_default_grid: zero bin count");
  StateGrid grid;

  grid.battery_edges.resize(battery_bins + 1);
  for (std::size_t i = 0; i <= battery_bins; ++i)
    grid.battery_edges[i] = config.battery_capacity * static_cast<double>(i) /
                            static_cast<double>(battery_bins);
  grid.battery_reps.resize(battery_bins);
  for (std::size_t i = 0; i < battery_bins; ++i)
    grid.battery_reps[i] = 0.5 * (grid.battery_edges[i] + grid.battery_edges[i + 1]);

  if (channel.family == ChannelFamily::kRayleighPowerGain) {
    grid.gain_edges.resize(gain_bins + 1);
    for (std::size_t i = 0; i <= gain_bins; ++i) {
      const double q = static_cast<double>(i) / static_cast<double>(gain_bins);
      grid.gain_edges[i] = (i == gain_bins) ? std::numeric_limits<double>::infinity()
                                            : -std::log1p(-q);
    }
    grid.gain_reps.resize(gain_bins);
    for (std::size_t i = 0; i < gain_bins; ++i) {
      const double a = grid.gain_edges[i], b = grid.gain_edges[i + 1];
      if (std::isinf(b)) {
        grid.gain_reps[i] = a + 1.0;  // E[g | g >= a] for Exp(1)
      } else {
        const double num = (a + 1.0) * std::exp(-a) - (b + 1.0) * std::exp(-b);
        grid.gain_reps[i] = num / (std::exp(-a) - std::exp(-b));
      }
    }
  } else {
    // One bin per discrete level, split at midpoints.
    const auto& lv = channel.level_set;
    grid.gain_edges.resize(lv.size() + 1);
    grid.gain_edges.front() = std::min(0.0, lv.front());
    for (std::size_t i = 1; i < lv.size(); ++i)
      grid.gain_edges[i] = 0.5 * (lv[i - 1] + lv[i]);
    grid.gain_edges.back() = lv.back() + 1.0;
    grid.gain_reps = lv;
  }

  const double sigma = std::sqrt(harvest.variance);
  const double hi = std::max(harvest.mean + 4.0 * sigma, 4.0 * sigma);
  grid.harvest_edges.resize(harvest_bins + 1);
  for (std::size_t i = 0; i <= harvest_bins; ++i)
    grid.harvest_edges[i] = hi * static_cast<double>(i) / static_cast<double>(harvest_bins);
  grid.harvest_reps.resize(harvest_bins);
  for (std::size_t i = 0; i < harvest_bins; ++i)
    grid.harvest_reps[i] = 0.5 * (grid.harvest_edges[i] + grid.harvest_edges[i + 1]);

  grid.validate();
  return grid;
}

// Simplex vector over the d discrete states.
struct MeanFieldDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }

  bool is_simplex(double tol = kSimplexTol) const {
    double sum = 0.0;
    for (double p : probs) {
      if (p < 0.0) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
  }

  void require_simplex(double tol = kSimplexTol) const {
    if (!is_simplex(tol))
      throw std::invalid_argument("MeanFieldDistribution: not a simplex vector");
  }
};

inline MeanFieldDistribution uniform_distribution(std::size_t d) {
  MeanFieldDistribution pi;
  pi.probs.assign(d, 1.0 / static_cast<double>(d));
  return pi;
}

inline double l2_distance(const MeanFieldDistribution& a, const MeanFieldDistribution& b) {
  return l2_distance(std::span<const double>(a.probs), std::span<const double>(b.probs));
}

// Row-stochastic transition matrix induced by a deterministic Markov policy.
struct TransitionKernel {
  std::size_t d = 0;
  std::vector<double> p;  // row-major d*d

  double operator()(std::size_t i, std::size_t j) const { return p[i * d + j]; }
  double& operator()(std::size_t i, std::size_t j) { return p[i * d + j]; }

  void require_stochastic(double tol = kSimplexTol) const {
    if (p.size() != d * d) throw std::invalid_argument("TransitionKernel: bad shape");
    for (std::size_t i = 0; i < d; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (p[i * d + j] < 0.0)
          throw std::invalid_argument("TransitionKernel: negative entry");
        sum += p[i * d + j];
      }
      if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("TransitionKernel: row not stochastic");
    }
  }
};

inline MeanFieldDistribution empirical_distribution(std::span<const std::size_t> states,
                                                    std::size_t d) {
  MeanFieldDistribution pi;
  pi.probs.assign(d, 0.0);
  for (std::size_t s : states) {
    if (s >= d) throw std::invalid_argument("empirical_distribution: index out of range");
    pi.probs[s] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(states.size());
  for (double& p : pi.probs) p *= inv;
  return pi;
}

// pi'_j = sum_i pi_i P_ij.
inline MeanFieldDistribution evolve_distribution(const MeanFieldDistribution& pi,
                                                 const TransitionKernel& kernel) {
  pi.require_simplex(1e-9);
  kernel.require_stochastic(1e-9);
  if (pi.size() != kernel.d)
    throw std::invalid_argument("evolve_distribution: dimension mismatch");
  MeanFieldDistribution out;
  out.probs.assign(kernel.d, 0.0);
  for (std::size_t i = 0; i < kernel.d; ++i) {
    const double w = pi.probs[i];
    if (w == 0.0) continue;
    axpy(w, kernel.p.data() + i * kernel.d, out.probs.data(), kernel.d);
  }
  return out;
}

// Fictitious-play belief update: (m/(m+1)) avg + (1/(m+1)) latest.
inline MeanFieldDistribution fp_average(const MeanFieldDistribution& averaged,
                                        const MeanFieldDistribution& latest, long m) {
  if (m < 1) throw std::invalid_argument("fp_average: m must be >= 1");
  averaged.require_simplex(1e-9);
  latest.require_simplex(1e-9);
  if (averaged.size() != latest.size())
    throw std::invalid_argument("fp_average: dimension mismatch");
  const double a = static_cast<double>(m) / static_cast<double>(m + 1);
  const double b = 1.0 / static_cast<double>(m + 1);
  MeanFieldDistribution out;
  out.probs.resize(averaged.size());
  for (std::size_t i = 0; i < averaged.size(); ++i)
    out.probs[i] = a * averaged.probs[i] + b * latest.probs[i];
  return out;
}

// Monotonicity inner product sum_i (pi2_i - pi1_i) (R(pi2) - R(pi1)) with the
// shared reward R(pi) = ln(1 + K sum_i pi_i p_i g_i). R carries no own-state
// dependence, so the sum telescopes to exactly zero.
inline double monotonicity_gap(const MeanFieldDistribution& pi1, const MeanFieldDistribution& pi2,
                               std::span<const double> state_powers,
                               std::span<const double> state_gains, std::size_t num_nodes) {
  pi1.require_simplex(1e-9);
  pi2.require_simplex(1e-9);
  const std::size_t d = pi1.size();
  if (pi2.size() != d || state_powers.size() != d || state_gains.size() != d)
    throw std::invalid_argument("monotonicity_gap: dimension mismatch");
  auto reward = [&](const MeanFieldDistribution& pi) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += pi.probs[i] * state_powers[i] * state_gains[i];
    return std::log1p(static_cast<double>(num_nodes) * s);
  };
  const double dr = reward(pi2) - reward(pi1);
  double gap = 0.0;
  for (std::size_t i = 0; i < d; ++i) gap += (pi2.probs[i] - pi1.probs[i]) * dr;
  return gap;
}

}  // namespace ehmac
