#pragma once

#include "hac/transitions.hpp"
#include "hac/umdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hac {

enum class OutputActivation : std::uint32_t {
  Linear = 0,
  TanhScaled = 1,        // center + halfwidth * tanh(z)
  NegSigmoidScaled = 2,  // -bound * sigmoid(z)
};

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;
};

using Gradients = std::vector<DenseLayer>;

/// Fully connected ReLU network with a fixed input affine map and a bounded
/// output head. Batches are matrices with one sample per column.
class DenseNet {
 public:
  struct Cache {
    std::vector<Mat> inputs;  // input to each layer (after normalization / ReLU)
    std::vector<Mat> pre;     // pre-activation of each layer
    Mat output;
  };

  DenseNet() = default;

  /// dims = {input, hidden..., output}.
  DenseNet(std::vector<std::size_t> dims, OutputActivation act, Vec out_center, Vec out_scale, Vec in_center,
           Vec in_scale)
      : dims_(std::move(dims)),
        act_(act),
        out_center_(std::move(out_center)),
        out_scale_(std::move(out_scale)),
        in_center_(std::move(in_center)),
        in_scale_(std::move(in_scale)) {
    if (dims_.size() < 2) throw ConfigError("network needs at least input and output dimensions");
    for (auto d : dims_)
      if (d == 0) throw ConfigError("network layer dimensions must be positive");
    if (static_cast<std::size_t>(in_center_.size()) != dims_.front() ||
        static_cast<std::size_t>(in_scale_.size()) != dims_.front())
      throw ConfigError("network input normalization has wrong dimension");
    if (static_cast<std::size_t>(out_center_.size()) != dims_.back() ||
        static_cast<std::size_t>(out_scale_.size()) != dims_.back())
      throw ConfigError("network output scaling has wrong dimension");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      auto in = static_cast<Eigen::Index>(dims_[l]), out = static_cast<Eigen::Index>(dims_[l + 1]);
      layers_.push_back(DenseLayer{Mat::Zero(out, in), Vec::Zero(out)});
    }
  }

  /// Uniform(+-1/sqrt(fan_in)) weights and biases; the last layer is shrunk by final_scale.
  void initialize(Rng& rng, double final_scale = 1e-3) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& layer = layers_[l];
      double limit = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      if (l + 1 == layers_.size()) limit *= final_scale;
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
    }
  }

  Mat forward(const Mat& x) const {
    Cache scratch;
    return forward(x, scratch);
  }

  Mat forward(const Mat& x, Cache& cache) const {
    check_input(x);
    cache.inputs.resize(layers_.size());
    cache.pre.resize(layers_.size());
    Mat h = (x.colwise() - in_center_).array().colwise() * in_scale_.array();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      cache.inputs[l] = h;
      Mat z = layers_[l].weight * h;
      z.colwise() += layers_[l].bias;
      cache.pre[l] = z;
      if (l + 1 < layers_.size()) h = z.cwiseMax(0.0);
      else h = std::move(z);
    }
    cache.output = apply_head(h);
    return cache.output;
  }

  /// Accumulates dL/dparams (summed over the batch) into `grads` and returns dL/dx.
  Mat backward(const Cache& cache, const Mat& grad_out, Gradients& grads) const {
    if (grads.size() != layers_.size()) grads = zero_gradients();
    Mat delta = head_derivative(cache).cwiseProduct(grad_out);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      grads[l].weight.noalias() += delta * cache.inputs[l].transpose();
      grads[l].bias += delta.rowwise().sum();
      Mat back = layers_[l].weight.transpose() * delta;
      if (l > 0) delta = back.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
      else delta = std::move(back);
    }
    return delta.array().colwise() * in_scale_.array();
  }

  /// dL/dx only; parameter gradients are not formed.
  Mat backward_input(const Cache& cache, const Mat& grad_out) const {
    Mat delta = head_derivative(cache).cwiseProduct(grad_out);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Mat back = layers_[l].weight.transpose() * delta;
      if (l > 0) delta = back.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
      else delta = std::move(back);
    }
    return delta.array().colwise() * in_scale_.array();
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) g.push_back(DenseLayer{Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  // Declared order: per layer, weights (column-major) then bias.
  Vec flat_parameters() const { return flatten(layers_); }
  static Vec flatten(const std::vector<DenseLayer>& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    Vec out(static_cast<Eigen::Index>(n));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
      out.segment(k, l.weight.size()) = Eigen::Map<const Vec>(l.weight.data(), l.weight.size());
      k += l.weight.size();
      out.segment(k, l.bias.size()) = l.bias;
      k += l.bias.size();
    }
    return out;
  }
  void set_flat_parameters(const Vec& p) {
    if (static_cast<std::size_t>(p.size()) != parameter_count()) throw ConfigError("parameter vector size mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      Eigen::Map<Vec>(l.weight.data(), l.weight.size()) = p.segment(k, l.weight.size());
      k += l.weight.size();
      l.bias = p.segment(k, l.bias.size());
      k += l.bias.size();
    }
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  OutputActivation activation() const { return act_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const Vec& out_center() const { return out_center_; }
  const Vec& out_scale() const { return out_scale_; }
  const Vec& in_center() const { return in_center_; }
  const Vec& in_scale() const { return in_scale_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

 private:
  void check_input(const Mat& x) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim())
      throw ConfigError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                        std::to_string(input_dim()));
  }

  Mat apply_head(const Mat& z) const {
    switch (act_) {
      case OutputActivation::Linear: return z;
      case OutputActivation::TanhScaled:
        return (z.array().tanh().colwise() * out_scale_.array()).colwise() + out_center_.array();
      case OutputActivation::NegSigmoidScaled:
        return -(sigmoid(z).array().colwise() * out_scale_.array());
    }
    return z;
  }

  Mat head_derivative(const Cache& cache) const {
    const Mat& z = cache.pre.back();
    switch (act_) {
      case OutputActivation::Linear: return Mat::Ones(z.rows(), z.cols());
      case OutputActivation::TanhScaled: {
        Mat t = z.array().tanh();
        return (1.0 - t.array().square()).colwise() * out_scale_.array();
      }
      case OutputActivation::NegSigmoidScaled: {
        Mat s = sigmoid(z);
        return -((s.array() * (1.0 - s.array())).colwise() * out_scale_.array());
      }
    }
    return Mat::Ones(z.rows(), z.cols());
  }

  static Mat sigmoid(const Mat& z) {
    // Split by sign so exp never overflows.
    return z.unaryExpr([](double v) {
      if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
      double e = std::exp(v);
      return e / (1.0 + e);
    });
  }

  std::vector<std::size_t> dims_;
  OutputActivation act_ = OutputActivation::Linear;
  Vec out_center_, out_scale_, in_center_, in_scale_;
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer.

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  Gradients m, v;

  AdamState() = default;
  AdamState(const DenseNet& net, double lr) : learning_rate(lr), m(net.zero_gradients()), v(net.zero_gradients()) {}

  /// Descends along `grads`.
  void apply(DenseNet& net, const Gradients& grads) {
    if (m.size() != grads.size()) {
      m = net.zero_gradients();
      v = net.zero_gradients();
    }
    ++step;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight, m[l].weight, v[l].weight, grads[l].weight, c1, c2);
      update(layers[l].bias, m[l].bias, v[l].bias, grads[l].bias, c1, c2);
    }
  }

 private:
  template <class P, class G>
  void update(P& param, P& mom, P& var, const G& grad, double c1, double c2) {
    mom = beta1 * mom + (1.0 - beta1) * grad;
    var = beta2 * var + (1.0 - beta2) * grad.cwiseProduct(grad);
    param.array() -= learning_rate * (mom.array() / c1) / ((var.array() / c2).sqrt() + epsilon);
  }
};

// ---------------------------------------------------------------------------
// Actor / critic conveniences

/// Actor mapping (state, goal) into an action box.
inline DenseNet make_actor(const Bounds& state_bounds, const Bounds& goal_bounds, const Bounds& action_bounds,
                           std::span<const std::size_t> hidden, Rng& rng) {
  auto sd = static_cast<std::size_t>(state_bounds.dim()), gd = static_cast<std::size_t>(goal_bounds.dim());
  std::vector<std::size_t> dims{sd + gd};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(static_cast<std::size_t>(action_bounds.dim()));
  Vec in_center(static_cast<Eigen::Index>(sd + gd)), in_scale(static_cast<Eigen::Index>(sd + gd));
  in_center << state_bounds.center(), goal_bounds.center();
  in_scale << state_bounds.halfwidth().cwiseMax(1e-12).cwiseInverse(), goal_bounds.halfwidth().cwiseMax(1e-12).cwiseInverse();
  DenseNet net(std::move(dims), OutputActivation::TanhScaled, action_bounds.center(), action_bounds.halfwidth(), in_center,
               in_scale);
  net.initialize(rng);
  return net;
}

/// Critic over (state, goal, action) with output in (-bound, 0).
inline DenseNet make_critic(const Bounds& state_bounds, const Bounds& goal_bounds, const Bounds& action_bounds,
                            std::span<const std::size_t> hidden, double bound, Rng& rng) {
  auto sd = state_bounds.dim(), gd = goal_bounds.dim(), ad = action_bounds.dim();
  std::vector<std::size_t> dims{static_cast<std::size_t>(sd + gd + ad)};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  Vec in_center(sd + gd + ad), in_scale(sd + gd + ad);
  in_center << state_bounds.center(), goal_bounds.center(), action_bounds.center();
  in_scale << state_bounds.halfwidth().cwiseMax(1e-12).cwiseInverse(), goal_bounds.halfwidth().cwiseMax(1e-12).cwiseInverse(),
      action_bounds.halfwidth().cwiseMax(1e-12).cwiseInverse();
  DenseNet net(std::move(dims), OutputActivation::NegSigmoidScaled, Vec::Zero(1), Vec::Constant(1, bound), in_center,
               in_scale);
  net.initialize(rng);
  return net;
}

inline double critic_bound(const DenseNet& critic) { return critic.out_scale()[0]; }

inline Vec actor_forward(const DenseNet& actor, const Vec& s, const Vec& g) {
  Vec x(s.size() + g.size());
  x << s, g;
  return actor.forward(x);
}

inline double critic_forward(const DenseNet& critic, const Vec& s, const Vec& g, const Vec& a) {
  Vec x(s.size() + g.size() + a.size());
  x << s, g, a;
  return critic.forward(x)(0, 0);
}

struct BatchMatrices {
  Mat state_goal;       // (s, g) per column
  Mat next_state_goal;  // (s', g)
  Mat action;
  Vec reward;
  Vec discount;
};

inline BatchMatrices stack_batch(std::span<const Transition> batch) {
  if (batch.empty()) throw ConfigError("empty training batch");
  auto n = static_cast<Eigen::Index>(batch.size());
  auto sd = batch[0].state.size(), gd = batch[0].goal.size(), ad = batch[0].action.size();
  BatchMatrices b{Mat(sd + gd, n), Mat(sd + gd, n), Mat(ad, n), Vec(n), Vec(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = batch[static_cast<std::size_t>(j)];
    b.state_goal.col(j) << t.state, t.goal;
    b.next_state_goal.col(j) << t.next_state, t.goal;
    b.action.col(j) = t.action;
    b.reward[j] = t.reward;
    b.discount[j] = t.discount;
  }
  return b;
}

inline Mat critic_input(const Mat& state_goal, const Mat& action) {
  Mat x(state_goal.rows() + action.rows(), state_goal.cols());
  x << state_goal, action;
  return x;
}

/// Bellman targets r + discount * Q(s', pi(s', g), g), clamped into [-bound, 0].
inline Vec td_targets(const BatchMatrices& b, const DenseNet& bootstrap_actor, const DenseNet& bootstrap_critic,
                      double bound) {
  Mat next_action = bootstrap_actor.forward(b.next_state_goal);
  Vec q_next = bootstrap_critic.forward(critic_input(b.next_state_goal, next_action)).row(0).transpose();
  Vec y = b.reward.array() + b.discount.array() * q_next.array();
  return y.cwiseMax(-bound).cwiseMin(0.0);
}

/// One gradient step on the mean squared TD error; returns the pre-step loss.
/// Without a separate bootstrap critic the current critic supplies the targets.
inline double critic_update(DenseNet& critic, AdamState& opt, std::span<const Transition> batch,
                            const DenseNet& bootstrap_actor, const DenseNet* bootstrap_critic = nullptr) {
  auto b = stack_batch(batch);
  double bound = critic_bound(critic);
  Vec y = td_targets(b, bootstrap_actor, bootstrap_critic ? *bootstrap_critic : critic, bound);
  DenseNet::Cache cache;
  Mat q = critic.forward(critic_input(b.state_goal, b.action), cache);
  Mat err = q - y.transpose();
  auto n = static_cast<double>(batch.size());
  double loss = err.squaredNorm() / n;
  Gradients grads = critic.zero_gradients();
  critic.backward(cache, (2.0 / n) * err, grads);
  opt.apply(critic, grads);
  return loss;
}

/// Actor parameter gradients of a loss given dloss/daction for each column.
inline Gradients actor_gradients(const DenseNet& actor, const Mat& state_goal,
                                 const std::function<Mat(const Mat& action)>& dloss_daction) {
  DenseNet::Cache cache;
  Mat action = actor.forward(state_goal, cache);
  Gradients grads = actor.zero_gradients();
  actor.backward(cache, dloss_daction(action), grads);
  return grads;
}

/// One ascent step on mean Q(s, pi(s, g), g) with the critic held fixed;
/// returns the pre-step mean Q. A positive action_l2 subtracts
/// action_l2 * mean |u|^2 from the objective, u being the action rescaled to
/// [-1, 1] by the actor's output box.
inline double actor_update(DenseNet& actor, AdamState& opt, std::span<const Transition> batch, const DenseNet& critic,
                           double action_l2 = 0.0) {
  auto b = stack_batch(batch);
  auto n = static_cast<double>(batch.size());
  double mean_q = 0;
  Gradients grads = actor_gradients(actor, b.state_goal, [&](const Mat& action) {
    DenseNet::Cache critic_cache;
    Mat q = critic.forward(critic_input(b.state_goal, action), critic_cache);
    mean_q = q.mean();
    Mat dq_dx = critic.backward_input(critic_cache, Mat::Constant(1, q.cols(), -1.0 / n));
    Mat grad_action = dq_dx.bottomRows(action.rows());
    if (action_l2 > 0) {
      Vec inv = actor.out_scale().cwiseInverse();
      Mat u = inv.asDiagonal() * (action.colwise() - actor.out_center());
      grad_action += (2.0 * action_l2 / n) * (inv.asDiagonal() * u);
    }
    return grad_action;
  });
  opt.apply(actor, grads);
  return mean_q;
}

/// Polyak averaging of target parameters toward the online network.
inline void soft_update(DenseNet& target, const DenseNet& online, double tau) {
  target.set_flat_parameters((1.0 - tau) * target.flat_parameters() + tau * online.flat_parameters());
}

// ---------------------------------------------------------------------------
// Gradient verification

struct LossFn {
  std::function<double(const Mat&)> value;     // loss of the network output
  std::function<Mat(const Mat&)> gradient;     // dloss/doutput
};

/// Max relative error between reverse-mode gradients and central differences
/// over every parameter.
inline double grad_check(const DenseNet& net, const LossFn& loss, const Mat& input, double epsilon = 1e-6) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ConfigError("grad_check: epsilon must lie in [1e-7, 1e-3]");
  DenseNet::Cache cache;
  Mat out = net.forward(input, cache);
  Gradients grads = net.zero_gradients();
  net.backward(cache, loss.gradient(out), grads);
  Vec analytic = DenseNet::flatten(grads);

  DenseNet probe = net;
  Vec params = net.flat_parameters();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    Vec p = params;
    p[i] = params[i] + epsilon;
    probe.set_flat_parameters(p);
    double plus = loss.value(probe.forward(input));
    p[i] = params[i] - epsilon;
    probe.set_flat_parameters(p);
    double minus = loss.value(probe.forward(input));
    double numeric = (plus - minus) / (2.0 * epsilon);
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    double diff = std::abs(analytic[i] - numeric);
    if (diff == 0.0) continue;
    worst = std::max(worst, diff / denom);
  }
  return worst;
}

}  // namespace hac
