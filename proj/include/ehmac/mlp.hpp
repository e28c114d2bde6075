#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehmac/matrix.hpp"
#include "ehmac/rng.hpp"

namespace ehmac {

// Minimal feedforward network: I_j = F(W_j I_{j-1} + b_j) layer by layer,
// exact reverse-mode gradients, SGD/Adam. Batches are matrices with one
// sample per row.

enum class Activation { kLinear, kRelu, kLeakyRelu };

struct MLPArchitecture {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output (h+2 entries)
  std::vector<Activation> activations;   // one per non-input layer
  double leaky_slope = 0.01;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }  // weighted layers

  void validate() const {
    if (layer_sizes.size() < 3)
      throw std::invalid_argument("MLPArchitecture: need at least one hidden layer");
    for (std::size_t n : layer_sizes)
      if (n == 0) throw std::invalid_argument("MLPArchitecture: zero-width layer");
    if (activations.size() != num_layers())
      throw std::invalid_argument("MLPArchitecture: one activation per weighted layer");
  }
};

// Uniform hidden sizes with relu and a linear output; handy for tests.
inline MLPArchitecture dense_arch(std::size_t in, std::vector<std::size_t> hidden,
                                  std::size_t out,
                                  Activation hidden_act = Activation::kRelu) {
  MLPArchitecture a;
  a.layer_sizes.push_back(in);
  for (std::size_t h : hidden) a.layer_sizes.push_back(h);
  a.layer_sizes.push_back(out);
  a.activations.assign(a.layer_sizes.size() - 1, hidden_act);
  a.activations.back() = Activation::kLinear;
  a.validate();
  return a;
}

struct MLPParameters {
  MLPArchitecture arch;
  std::vector<Matrix> weights;               // weights[l]: N_{l+1} x N_l
  std::vector<std::vector<double>> biases;   // biases[l]: N_{l+1}

  void validate() const {
    arch.validate();
    if (weights.size() != arch.num_layers() || biases.size() != arch.num_layers())
      throw std::invalid_argument("MLPParameters: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows != arch.layer_sizes[l + 1] || weights[l].cols != arch.layer_sizes[l])
        throw std::invalid_argument("MLPParameters: weight shape mismatch");
      if (biases[l].size() != arch.layer_sizes[l + 1])
        throw std::invalid_argument("MLPParameters: bias shape mismatch");
    }
  }
};

// Glorot-uniform weights, zero biases.
inline MLPParameters init_params(const MLPArchitecture& arch, Rng& rng) {
  arch.validate();
  MLPParameters p;
  p.arch = arch;
  for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
    const std::size_t fan_in = arch.layer_sizes[l], fan_out = arch.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& x : w.data) x = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

inline double activate(Activation a, double x, double slope) {
  switch (a) {
    case Activation::kLinear: return x;
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kLeakyRelu: return x > 0.0 ? x : slope * x;
  }
  return x;
}

inline double activate_grad(Activation a, double pre, double slope) {
  switch (a) {
    case Activation::kLinear: return 1.0;
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kLeakyRelu: return pre > 0.0 ? 1.0 : slope;
  }
  return 1.0;
}

// Activations kept from a forward pass, for backprop.
struct ForwardTrace {
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation; post[0] is the input batch
};

inline ForwardTrace forward_trace(const MLPParameters& p, const Matrix& inputs) {
  if (inputs.cols != p.arch.input_size())
    throw std::invalid_argument("forward: input width mismatch");
  ForwardTrace t;
  t.post.push_back(inputs);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Matrix& w = p.weights[l];
    const Matrix& a_prev = t.post.back();
    Matrix z(inputs.rows, w.rows);
    for (std::size_t b = 0; b < inputs.rows; ++b)
      for (std::size_t o = 0; o < w.rows; ++o)
        z(b, o) = dot(a_prev.row(b), w.row(o), w.cols) + p.biases[l][o];
    Matrix a(z.rows, z.cols);
    const Activation act = p.arch.activations[l];
    for (std::size_t i = 0; i < z.data.size(); ++i)
      a.data[i] = activate(act, z.data[i], p.arch.leaky_slope);
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
  }
  return t;
}

inline Matrix forward_batch(const MLPParameters& p, const Matrix& inputs) {
  return forward_trace(p, inputs).post.back();
}

inline std::vector<double> forward(const MLPParameters& p, std::span<const double> input) {
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  const Matrix y = forward_batch(p, x);
  return y.data;
}

// Mean of squared componentwise differences.
inline double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("mse_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

inline double mse_loss(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  return mse_loss(std::span<const double>(pred.data), std::span<const double>(target.data));
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

// Backprop from an explicit dLoss/dOutput matrix. The DQN path uses this to
// route gradient only through chosen-action outputs.
inline Gradients backward_from_output_grad(const MLPParameters& p, const ForwardTrace& t,
                                           Matrix d_out) {
  Gradients g;
  g.weights.reserve(p.weights.size());
  g.biases.reserve(p.weights.size());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    g.weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
    g.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  const std::size_t batch = d_out.rows;
  Matrix delta = std::move(d_out);
  for (std::size_t li = p.weights.size(); li-- > 0;) {
    const Matrix& pre = t.pre[li];
    const Activation act = p.arch.activations[li];
    for (std::size_t i = 0; i < delta.data.size(); ++i)
      delta.data[i] *= activate_grad(act, pre.data[i], p.arch.leaky_slope);
    const Matrix& a_prev = t.post[li];
    Matrix& gw = g.weights[li];
    std::vector<double>& gb = g.biases[li];
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dz = delta.row(b);
      for (std::size_t o = 0; o < gw.rows; ++o) {
        if (dz[o] != 0.0) axpy(dz[o], a_prev.row(b), gw.row(o), gw.cols);
        gb[o] += dz[o];
      }
    }
    if (li == 0) break;
    const Matrix& w = p.weights[li];
    Matrix next(batch, w.cols, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dz = delta.row(b);
      for (std::size_t o = 0; o < w.rows; ++o)
        if (dz[o] != 0.0) axpy(dz[o], w.row(o), next.row(b), w.cols);
    }
    delta = std::move(next);
  }
  return g;
}

// Gradients of the batch-averaged mse loss.
inline Gradients backward(const MLPParameters& p, const Matrix& inputs, const Matrix& targets) {
  const ForwardTrace t = forward_trace(p, inputs);
  const Matrix& out = t.post.back();
  if (!out.same_shape(targets)) throw std::invalid_argument("backward: target shape mismatch");
  Matrix d_out(out.rows, out.cols);
  const double scale = 2.0 / static_cast<double>(out.cols * out.rows);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    d_out.data[i] = scale * (out.data[i] - targets.data[i]);
  return backward_from_output_grad(p, t, std::move(d_out));
}

enum class OptimizerKind { kSgd, kAdam };

struct TrainingConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t shuffle_seed = 1;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainingConfig: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainingConfig: lr must be > 0");
  }
};

// Carries Adam moments; plain SGD ignores them.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double epsilon = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  explicit Optimizer(const TrainingConfig& cfg)
      : Optimizer(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon) {}

  long step_count() const { return step_; }

  void apply(MLPParameters& params, const Gradients& grads) {
    if (grads.weights.size() != params.weights.size())
      throw std::invalid_argument("Optimizer: gradient/parameter mismatch");
    ++step_;
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        if (!params.weights[l].same_shape(grads.weights[l]))
          throw std::invalid_argument("Optimizer: gradient shape mismatch");
        for (std::size_t i = 0; i < params.weights[l].data.size(); ++i)
          params.weights[l].data[i] -= lr_ * grads.weights[l].data[i];
        for (std::size_t i = 0; i < params.biases[l].size(); ++i)
          params.biases[l][i] -= lr_ * grads.biases[l][i];
      }
      return;
    }
    if (m_w_.empty()) init_state(params);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      if (!params.weights[l].same_shape(grads.weights[l]))
        throw std::invalid_argument("Optimizer: gradient shape mismatch");
      auto adam = [&](double& theta, double g, double& m, double& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        theta -= lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
      };
      for (std::size_t i = 0; i < params.weights[l].data.size(); ++i)
        adam(params.weights[l].data[i], grads.weights[l].data[i], m_w_[l].data[i],
             v_w_[l].data[i]);
      for (std::size_t i = 0; i < params.biases[l].size(); ++i)
        adam(params.biases[l][i], grads.biases[l][i], m_b_[l][i], v_b_[l][i]);
    }
  }

 private:
  void init_state(const MLPParameters& params) {
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      m_w_.emplace_back(params.weights[l].rows, params.weights[l].cols);
      v_w_.emplace_back(params.weights[l].rows, params.weights[l].cols);
      m_b_.emplace_back(params.biases[l].size(), 0.0);
      v_b_.emplace_back(params.biases[l].size(), 0.0);
    }
  }

  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Matrix> m_w_, v_w_;
  std::vector<std::vector<double>> m_b_, v_b_;
};

inline void apply_gradients(MLPParameters& params, const Gradients& grads, Optimizer& opt) {
  opt.apply(params, grads);
}

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch, averaged over batches
  std::vector<double> val_loss;
};

inline TrainHistory train(MLPParameters& params, const Matrix& x, const Matrix& y,
                          const Matrix& x_val, const Matrix& y_val,
                          const TrainingConfig& cfg) {
  cfg.validate();
  if (x.rows == 0) throw std::invalid_argument("train: empty dataset");
  if (x.rows != y.rows) throw std::invalid_argument("train: input/target row mismatch");
  Optimizer opt(cfg);
  Rng shuffle_rng(cfg.shuffle_seed);
  TrainHistory hist;
  std::vector<std::size_t> order(x.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
      Matrix xb(bs, x.cols), yb(bs, y.cols);
      for (std::size_t b = 0; b < bs; ++b) {
        const std::size_t src = order[start + b];
        std::copy(x.row(src), x.row(src) + x.cols, xb.row(b));
        std::copy(y.row(src), y.row(src) + y.cols, yb.row(b));
      }
      const ForwardTrace t = forward_trace(params, xb);
      const double loss = mse_loss(t.post.back(), yb);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      Matrix d_out(bs, y.cols);
      const double scale = 2.0 / static_cast<double>(bs * y.cols);
      for (std::size_t i = 0; i < d_out.data.size(); ++i)
        d_out.data[i] = scale * (t.post.back().data[i] - yb.data[i]);
      opt.apply(params, backward_from_output_grad(params, t, std::move(d_out)));
      epoch_loss += loss;
      ++batches;
    }
    hist.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    hist.val_loss.push_back(x_val.rows > 0 ? mse_loss(forward_batch(params, x_val), y_val)
                                           : 0.0);
  }
  return hist;
}

// Central-difference check of backward() on a single sample; returns the
// worst relative error across every weight and bias.
inline double grad_check(const MLPParameters& params, std::span<const double> input,
                         std::span<const double> target, double eps = 1e-5) {
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  Matrix y(1, target.size());
  std::copy(target.begin(), target.end(), y.data.begin());
  const Gradients g = backward(params, x, y);

  MLPParameters probe = params;
  auto loss_at = [&]() { return mse_loss(forward_batch(probe, x), y); };
  double worst = 0.0;
  auto check_one = [&](double& theta, double analytic) {
    const double saved = theta;
    theta = saved + eps;
    const double hi = loss_at();
    theta = saved - eps;
    const double lo = loss_at();
    theta = saved;
    const double numeric = (hi - lo) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (std::size_t i = 0; i < probe.weights[l].data.size(); ++i)
      check_one(probe.weights[l].data[i], g.weights[l].data[i]);
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i)
      check_one(probe.biases[l][i], g.biases[l][i]);
  }
  return worst;
}

// Per-feature affine map to zero mean / unit variance, fit on training data
// and stored with the model.
struct Normalizer {
  std::vector<double> mean, stddev;

  void fit(const Matrix& x) {
    mean.assign(x.cols, 0.0);
    stddev.assign(x.cols, 0.0);
    if (x.rows == 0) throw std::invalid_argument("Normalizer: empty data");
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) mean[c] += x(r, c);
    for (double& m : mean) m /= static_cast<double>(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) {
        const double d = x(r, c) - mean[c];
        stddev[c] += d * d;
      }
    for (double& s : stddev) s = std::max(std::sqrt(s / static_cast<double>(x.rows)), 1e-8);
  }

  void apply_inplace(std::span<double> row) const {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / stddev[c];
  }

  Matrix apply(const Matrix& x) const {
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows; ++r)
      apply_inplace({out.row(r), out.cols});
    return out;
  }

  bool fitted() const { return !mean.empty(); }
};

}  // namespace ehmac
