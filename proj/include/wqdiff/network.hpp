#pragma once

// Feed-forward epsilon-prediction network with hand-written reverse-mode
// gradients, and the Adam optimizer that trains it.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "wqdiff/error.hpp"
#include "wqdiff/rng.hpp"

namespace wqdiff {

/// Sinusoidal features of s = t / T: sin(2^j pi s), cos(2^j pi s) for
/// j = 0 .. dim/2 - 1.
inline void timestep_embedding(double s, Eigen::Ref<Eigen::VectorXd> out) {
  const Eigen::Index half = out.size() / 2;
  double freq = std::numbers::pi;
  for (Eigen::Index j = 0; j < half; ++j, freq *= 2.0) {
    out(2 * j) = std::sin(freq * s);
    out(2 * j + 1) = std::cos(freq * s);
  }
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameter-shaped gradient buffers.
struct DenoiserGradients {
  std::vector<DenseLayer> layers;
};

/// Maps (x_t, timestep embedding, condition) to a noise estimate. Inputs and
/// outputs are column-major batches: one column per sample.
class Denoiser {
public:
  static constexpr Eigen::Index kTargetDim = 3;

  Denoiser() = default;

  Denoiser(std::size_t condition_dim, std::vector<std::size_t> hidden, std::size_t embedding_dim, std::uint64_t seed)
      : condition_dim_(condition_dim), embedding_dim_(embedding_dim), hidden_(std::move(hidden)) {
    if (embedding_dim_ % 2 != 0) throw ConfigError("timestep embedding dimension must be even");
    if (hidden_.empty()) throw ConfigError("denoiser needs at least one hidden layer");
    Rng rng(seed);
    std::size_t in = input_dim();
    std::vector<std::size_t> outs = hidden_;
    outs.push_back(static_cast<std::size_t>(kTargetDim));
    for (std::size_t out : outs) {
      if (out == 0) throw ConfigError("hidden layer sizes must be positive");
      DenseLayer layer;
      layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
      // Glorot-uniform initialization.
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-limit, limit);
      layers_.push_back(std::move(layer));
      in = out;
    }
  }

  std::size_t condition_dim() const { return condition_dim_; }
  std::size_t embedding_dim() const { return embedding_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  std::size_t input_dim() const { return static_cast<std::size_t>(kTargetDim) + embedding_dim_ + condition_dim_; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Flat view of parameter `i` (weights of each layer column-major, then its biases).
  double parameter(std::size_t i) const { return const_cast<Denoiser*>(this)->parameter(i); }
  double& parameter(std::size_t i) {
    for (auto& l : layers_) {
      const auto w = static_cast<std::size_t>(l.weight.size());
      if (i < w) return l.weight.data()[i];
      i -= w;
      const auto b = static_cast<std::size_t>(l.bias.size());
      if (i < b) return l.bias.data()[i];
      i -= b;
    }
    throw ConfigError("parameter index out of range");
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  /// Assembles the input matrix [x_t; embedding(t / T); condition].
  Eigen::MatrixXd make_input(const Eigen::MatrixXd& x_t, const std::vector<int>& steps, int total_steps,
                             const Eigen::MatrixXd& condition) const {
    const Eigen::Index batch = x_t.cols();
    Eigen::MatrixXd in(static_cast<Eigen::Index>(input_dim()), batch);
    in.topRows(kTargetDim) = x_t;
    const auto emb = static_cast<Eigen::Index>(embedding_dim_);
    for (Eigen::Index j = 0; j < batch; ++j)
      timestep_embedding(static_cast<double>(steps[static_cast<std::size_t>(j)]) / total_steps,
                         in.block(kTargetDim, j, emb, 1));
    in.bottomRows(static_cast<Eigen::Index>(condition_dim_)) = condition;
    return in;
  }

  /// Same as make_input for a batch that shares one timestep.
  Eigen::MatrixXd make_input(const Eigen::MatrixXd& x_t, int step, int total_steps, const Eigen::MatrixXd& condition) const {
    const Eigen::Index batch = x_t.cols();
    Eigen::MatrixXd in(static_cast<Eigen::Index>(input_dim()), batch);
    in.topRows(kTargetDim) = x_t;
    Eigen::VectorXd e(static_cast<Eigen::Index>(embedding_dim_));
    timestep_embedding(static_cast<double>(step) / total_steps, e);
    in.middleRows(kTargetDim, static_cast<Eigen::Index>(embedding_dim_)) = e.replicate(1, batch);
    in.bottomRows(static_cast<Eigen::Index>(condition_dim_)) = condition;
    return in;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const {
    Eigen::MatrixXd a = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Eigen::MatrixXd z = layers_[i].weight * a;
      z.colwise() += layers_[i].bias;
      a = i + 1 < layers_.size() ? silu(z) : std::move(z);
    }
    return a;
  }

  /// Forward pass that keeps pre-activations, then backpropagates
  /// loss_grad(output) = dL/d output into `grads`. Returns the output.
  Eigen::MatrixXd forward_backward(const Eigen::MatrixXd& input, const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& loss_grad,
                                   DenoiserGradients& grads) const {
    std::vector<Eigen::MatrixXd> acts{input};  // layer inputs
    std::vector<Eigen::MatrixXd> pre;          // pre-activations of hidden layers
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Eigen::MatrixXd z = layers_[i].weight * acts.back();
      z.colwise() += layers_[i].bias;
      if (i + 1 < layers_.size()) {
        acts.push_back(silu(z));
        pre.push_back(std::move(z));
      } else {
        acts.push_back(std::move(z));
      }
    }
    Eigen::MatrixXd delta = loss_grad(acts.back());
    grads.layers.resize(layers_.size());
    for (std::size_t i = layers_.size(); i-- > 0;) {
      grads.layers[i].weight.noalias() = delta * acts[i].transpose();
      grads.layers[i].bias = delta.rowwise().sum();
      if (i == 0) break;
      Eigen::MatrixXd back = layers_[i].weight.transpose() * delta;
      delta = back.cwiseProduct(silu_derivative(pre[i - 1]));
    }
    return acts.back();
  }

  // SiLU z * sigmoid(z); array form so Eigen vectorizes exp.
  static Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
    return (z.array() / (1.0 + (-z.array()).exp())).matrix();
  }

  static Eigen::MatrixXd silu_derivative(const Eigen::MatrixXd& z) {
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
    return (s * (1.0 + z.array() * (1.0 - s))).matrix();
  }

private:
  std::size_t condition_dim_ = 0;
  std::size_t embedding_dim_ = 16;
  std::vector<std::size_t> hidden_;
  std::vector<DenseLayer> layers_;
};

/// Adaptive-moment optimizer over a Denoiser's parameters.
class Adam {
public:
  Adam(const Denoiser& model, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& l : model.layers()) {
      m_.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
      v_.push_back(m_.back());
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void step(Denoiser& model, const DenoiserGradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
      m = beta1_ * m + (1.0 - beta1_) * grad;
      v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
      param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      update(layers[i].weight, g.layers[i].weight, m_[i].weight, v_[i].weight);
      update(layers[i].bias, g.layers[i].bias, m_[i].bias, v_[i].bias);
    }
  }

private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<DenseLayer> m_, v_;
};

}  // namespace wqdiff
