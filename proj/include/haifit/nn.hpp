#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "haifit/ops.hpp"

namespace haifit {

using Rng = std::mt19937_64;

template <typename Scalar>
struct NamedParam {
  std::string name;
  Var<Scalar> var;
};

template <typename Scalar>
using ParamList = std::vector<NamedParam<Scalar>>;

/// Weights ~ N(0, stddev). Draws in double so float and double models built
/// from the same seed hold the same values up to rounding.
template <typename Scalar>
Tensor<Scalar> normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
  return t;
}

inline constexpr double kInitStddev = 0.02;

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in, Index out, Index kernel, Index stride, Index pad, Rng& rng, bool with_bias = true)
      : stride_(stride), pad_(pad) {
    weight_ = Var<Scalar>(normal_tensor<Scalar>(Shape{out, in, kernel, kernel}, kInitStddev, rng), true);
    if (with_bias) bias_ = Var<Scalar>(Tensor<Scalar>(Shape{out, 1, 1, 1}), true);
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return ops::conv2d(x, weight_, bias_, stride_, pad_); }

  void collect(const std::string& prefix, ParamList<Scalar>& out) const {
    out.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
  }

  Var<Scalar>& weight() { return weight_; }
  Var<Scalar>& bias() { return bias_; }
  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }
  Index in_channels() const { return weight_.shape().c; }
  Index out_channels() const { return weight_.shape().n; }

 private:
  Var<Scalar> weight_;
  Var<Scalar> bias_;
  Index stride_ = 1;
  Index pad_ = 0;
};

/// Single LSTM layer over (n, features, 1, 1) steps. Gate order i, f, g, o;
/// one fused bias.
template <typename Scalar>
class LstmLayer {
 public:
  struct State {
    Var<Scalar> h;
    Var<Scalar> c;
  };

  LstmLayer() = default;
  LstmLayer(Index input, Index hidden, Rng& rng) : hidden_(hidden) {
    w_ih_ = Var<Scalar>(normal_tensor<Scalar>(Shape{4 * hidden, input, 1, 1}, kInitStddev, rng), true);
    w_hh_ = Var<Scalar>(normal_tensor<Scalar>(Shape{4 * hidden, hidden, 1, 1}, kInitStddev, rng), true);
    bias_ = Var<Scalar>(Tensor<Scalar>(Shape{4 * hidden, 1, 1, 1}), true);
  }

  /// One step. An undefined previous state means zero h and c.
  State step(const Var<Scalar>& x, const State& prev) const {
    Var<Scalar> gates = ops::linear(x, w_ih_, bias_);
    if (prev.h.defined()) gates = ops::add(gates, ops::linear(prev.h, w_hh_, Var<Scalar>{}));
    auto i = ops::sigmoid(ops::slice_features(gates, 0, hidden_));
    auto f = ops::sigmoid(ops::slice_features(gates, hidden_, hidden_));
    auto g = ops::tanh(ops::slice_features(gates, 2 * hidden_, hidden_));
    auto o = ops::sigmoid(ops::slice_features(gates, 3 * hidden_, hidden_));
    Var<Scalar> c = ops::mul(i, g);
    if (prev.c.defined()) c = ops::add(ops::mul(f, prev.c), c);
    return {ops::mul(o, ops::tanh(c)), c};
  }

  void collect(const std::string& prefix, ParamList<Scalar>& out) const {
    out.push_back({prefix + ".w_ih", w_ih_});
    out.push_back({prefix + ".w_hh", w_hh_});
    out.push_back({prefix + ".bias", bias_});
  }

  Index hidden() const { return hidden_; }

 private:
  Index hidden_ = 0;
  Var<Scalar> w_ih_;
  Var<Scalar> w_hh_;
  Var<Scalar> bias_;
};

/// Stacked LSTM returning the top layer's output at every step.
template <typename Scalar>
class Lstm {
 public:
  Lstm() = default;
  Lstm(Index input, Index hidden, int layers, Rng& rng) {
    for (int l = 0; l < layers; ++l) layers_.emplace_back(l == 0 ? input : hidden, hidden, rng);
  }

  std::vector<Var<Scalar>> operator()(const std::vector<Var<Scalar>>& steps) const {
    std::vector<typename LstmLayer<Scalar>::State> state(layers_.size());
    std::vector<Var<Scalar>> outputs;
    outputs.reserve(steps.size());
    for (const auto& x : steps) {
      Var<Scalar> in = x;
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        state[l] = layers_[l].step(in, state[l]);
        in = state[l].h;
      }
      outputs.push_back(in);
    }
    return outputs;
  }

  void collect(const std::string& prefix, ParamList<Scalar>& out) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].collect(prefix + ".l" + std::to_string(l), out);
  }

 private:
  std::vector<LstmLayer<Scalar>> layers_;
};

template <typename Scalar>
void set_requires_grad(const ParamList<Scalar>& params, bool on) {
  for (const auto& p : params) p.var.set_requires_grad(on);
}

template <typename Scalar>
void zero_grad(const ParamList<Scalar>& params) {
  for (const auto& p : params) p.var.zero_grad();
}

}  // namespace haifit
