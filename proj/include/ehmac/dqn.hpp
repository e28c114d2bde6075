#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "ehmac/checkpoint.hpp"
#include "ehmac/env.hpp"
#include "ehmac/mlp.hpp"

namespace ehmac {

// Per-node deep Q-learning: replay buffer, fixed target network, eps-greedy
// exploration with feasibility masking. The Q-network maps the local state
// (e, B, g) to one value per action-grid entry.

struct Transition {
  std::array<double, 3> state{};       // (e, B, g)
  int action = 0;                      // index into the action grid
  double reward = 0.0;                 // nats
  std::array<double, 3> next_state{};
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2000) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }

  void push(const Transition& t) {
    if (ring_.size() < capacity_) {
      ring_.push_back(t);
    } else {
      ring_[head_] = t;  // overwrite oldest
      head_ = (head_ + 1) % capacity_;
    }
  }

  // Uniform sample of n distinct stored transitions.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    if (n > ring_.size())
      throw std::invalid_argument("ReplayBuffer: sample larger than contents");
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i : rng.sample_indices(ring_.size(), n)) batch.push_back(ring_[i]);
    return batch;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> ring_;
};

struct DQNConfig {
  double gamma = 0.99;
  double eps_max = 1.0;
  double eps_min = 0.01;
  double eps_decay = 0.995;  // per environment slot
  std::size_t batch_size = 32;
  long target_sync_period = 100;  // update steps between target refreshes
  double learning_rate = 1e-3;
  std::size_t replay_capacity = 2000;
  // Fixed per-coordinate input scaling for the Q-network. Raw (e, B, g)
  // magnitudes differ by an order of magnitude; feasibility masks always see
  // the raw battery.
  std::array<double, 3> state_scale{1.0, 1.0, 1.0};

  void validate() const {
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("DQNConfig: gamma in [0,1)");
    if (eps_min > eps_max) throw std::invalid_argument("DQNConfig: eps_min > eps_max");
    if (batch_size == 0) throw std::invalid_argument("DQNConfig: batch size >= 1");
    for (double s : state_scale)
      if (!(s > 0.0)) throw std::invalid_argument("DQNConfig: nonpositive state scale");
  }
};

inline std::array<double, 3> scale_state(const std::array<double, 3>& s,
                                         const std::array<double, 3>& scale) {
  return {s[0] / scale[0], s[1] / scale[1], s[2] / scale[2]};
}

// Input 3, first hidden layer `first_hidden`, width repeated on even hidden
// layers and shrunk by `shrink` on the odd ones after each pair; relu hidden,
// linear output, one output per action. Defaults give the 10-layer profile
// 60,60,58,58,...,52,52.
inline MLPArchitecture build_q_arch(std::size_t num_actions, std::size_t hidden_layers = 10,
                                    std::size_t first_hidden = 60, std::size_t shrink = 2) {
  if (num_actions == 0) throw std::invalid_argument("build_q_arch: no actions");
  MLPArchitecture a;
  a.layer_sizes.push_back(3);
  std::size_t width = first_hidden;
  for (std::size_t j = 0; j < hidden_layers; ++j) {
    if (j > 0 && j % 2 == 0) {
      if (width <= shrink) throw std::invalid_argument("build_q_arch: width exhausted");
      width -= shrink;
    }
    a.layer_sizes.push_back(width);
  }
  a.layer_sizes.push_back(num_actions);
  a.activations.assign(a.layer_sizes.size() - 1, Activation::kRelu);
  a.activations.back() = Activation::kLinear;
  a.validate();
  return a;
}

// Actions with p <= min(B, P_max). Action 0 transmits nothing, so the set is
// never empty.
inline std::vector<int> feasible_actions(const std::vector<double>& action_grid, double battery,
                                         double p_max) {
  const double bound = std::min(battery, p_max);
  std::vector<int> out;
  for (std::size_t i = 0; i < action_grid.size(); ++i)
    if (action_grid[i] <= bound + 1e-12) out.push_back(static_cast<int>(i));
  return out;
}

inline int select_action(const MLPParameters& qnet, const std::array<double, 3>& state,
                         const std::vector<double>& action_grid, double p_max, double eps,
                         Rng& rng, const std::array<double, 3>& state_scale = {1.0, 1.0, 1.0}) {
  const std::vector<int> feas = feasible_actions(action_grid, state[1], p_max);
  if (eps > 0.0 && rng.uniform() < eps)
    return feas[rng.uniform_int(feas.size())];
  const std::vector<double> q = forward(qnet, scale_state(state, state_scale));
  int best = feas.front();
  for (int a : feas)
    if (q[a] > q[best]) best = a;
  return best;
}

// y_i = r_i + gamma * max over feasible actions of Q_target(s'_i, .).
inline std::vector<double> td_targets(const std::vector<Transition>& batch,
                                      const MLPParameters& target_net, double gamma,
                                      const std::vector<double>& action_grid, double p_max,
                                      const std::array<double, 3>& state_scale = {1.0, 1.0,
                                                                                  1.0}) {
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double best = 0.0;
    if (gamma != 0.0) {
      const std::vector<double> q =
          forward(target_net, scale_state(batch[i].next_state, state_scale));
      const std::vector<int> feas =
          feasible_actions(action_grid, batch[i].next_state[1], p_max);
      best = q[feas.front()];
      for (int a : feas) best = std::max(best, q[a]);
    }
    y[i] = batch[i].reward + gamma * best;
  }
  return y;
}

// One optimizer step on the selected-action squared error; non-chosen
// outputs receive zero gradient.
inline void dqn_update(MLPParameters& qnet, const MLPParameters& target_net,
                       const std::vector<Transition>& batch, const DQNConfig& cfg,
                       const std::vector<double>& action_grid, double p_max, Optimizer& opt) {
  if (batch.empty()) throw std::invalid_argument("dqn_update: empty batch");
  const std::vector<double> y =
      td_targets(batch, target_net, cfg.gamma, action_grid, p_max, cfg.state_scale);
  Matrix x(batch.size(), 3);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::array<double, 3> scaled = scale_state(batch[i].state, cfg.state_scale);
    std::copy(scaled.begin(), scaled.end(), x.row(i));
  }
  const ForwardTrace t = forward_trace(qnet, x);
  const Matrix& q = t.post.back();
  Matrix d_out(q.rows, q.cols, 0.0);
  const double scale = 2.0 / static_cast<double>(batch.size());
  bool all_zero = true;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = q(i, static_cast<std::size_t>(batch[i].action)) - y[i];
    if (!std::isfinite(r)) throw std::runtime_error("dqn_update: non-finite residual");
    d_out(i, static_cast<std::size_t>(batch[i].action)) = scale * r;
    if (r != 0.0) all_zero = false;
  }
  if (all_zero) return;  // zero residual: parameters stay put
  opt.apply(qnet, backward_from_output_grad(qnet, t, std::move(d_out)));
}

inline MLPParameters sync_target(const MLPParameters& qnet) { return qnet; }

// FNV-1a over the raw parameter bytes; used to audit that Q-weights persist
// across fictitious-play iterations.
inline std::uint64_t param_fingerprint(const MLPParameters& p) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const double* data, std::size_t n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Matrix& w : p.weights) mix(w.data.data(), w.data.size());
  for (const auto& b : p.biases) mix(b.data(), b.size());
  return h;
}

// One learning agent per node. Updates are agent-private: own network, own
// buffer, own RNG stream.
class DQNAgent {
 public:
  DQNAgent(std::vector<double> action_grid, double p_max, const DQNConfig& cfg,
           const MLPArchitecture& arch, std::uint64_t seed)
      : action_grid_(std::move(action_grid)),
        p_max_(p_max),
        cfg_(cfg),
        buffer_(cfg.replay_capacity),
        rng_(seed),
        opt_(OptimizerKind::kAdam, cfg.learning_rate),
        eps_(cfg.eps_max) {
    cfg_.validate();
    if (arch.output_size() != action_grid_.size())
      throw std::invalid_argument("DQNAgent: output width must equal action count");
    Rng init = rng_.substream(0x1d17);
    qnet_ = init_params(arch, init);
    target_ = sync_target(qnet_);
  }

  int act(const NodeState& s, bool greedy = false) {
    const std::array<double, 3> st{s.harvest, s.battery, s.gain};
    return select_action(qnet_, st, action_grid_, p_max_, greedy ? 0.0 : eps_, rng_,
                         cfg_.state_scale);
  }

  double power_of(int action) const { return action_grid_.at(static_cast<std::size_t>(action)); }

  // Records the transition, runs one batch update when the buffer allows,
  // and advances the per-slot exploration schedule.
  void observe(const NodeState& s, int action, double reward, const NodeState& next) {
    Transition t;
    t.state = {s.harvest, s.battery, s.gain};
    t.action = action;
    t.reward = reward;
    t.next_state = {next.harvest, next.battery, next.gain};
    buffer_.push(t);
    if (buffer_.size() >= cfg_.batch_size) {
      dqn_update(qnet_, target_, buffer_.sample(cfg_.batch_size, rng_), cfg_, action_grid_,
                 p_max_, opt_);
      ++updates_;
      if (updates_ % cfg_.target_sync_period == 0) target_ = sync_target(qnet_);
    }
    ++slots_;
    eps_ = std::max(cfg_.eps_min, eps_ * cfg_.eps_decay);
  }

  double epsilon() const { return eps_; }
  long slots_seen() const { return slots_; }
  long update_steps() const { return updates_; }
  const std::vector<double>& action_grid() const { return action_grid_; }
  const MLPParameters& qnet() const { return qnet_; }
  const MLPParameters& target_net() const { return target_; }
  std::uint64_t fingerprint() const { return param_fingerprint(qnet_); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = "dqn_agent";
    j["net"] = mlp_to_json(qnet_);
    j["target"] = mlp_to_json(target_);
    j["epsilon"] = eps_;
    j["slots"] = slots_;
    j["updates"] = updates_;
    j["action_grid"] = action_grid_;
    return j;
  }

  void restore(const nlohmann::json& j) {
    qnet_ = mlp_from_json(j.at("net"));
    target_ = mlp_from_json(j.at("target"));
    eps_ = j.at("epsilon").get<double>();
    slots_ = j.at("slots").get<long>();
    updates_ = j.at("updates").get<long>();
  }

 private:
  std::vector<double> action_grid_;
  double p_max_;
  DQNConfig cfg_;
  ReplayBuffer buffer_;
  Rng rng_;
  Optimizer opt_;
  MLPParameters qnet_, target_;
  double eps_;
  long slots_ = 0;
  long updates_ = 0;
};

}  // namespace ehmac
