#pragma once

// Conditional DDPM over the standardized 3-vector target: noise schedule,
// closed-form forward process, epsilon-MSE loss with exact gradients,
// training loop, and ancestral sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wqdiff/error.hpp"
#include "wqdiff/network.hpp"
#include "wqdiff/rng.hpp"

namespace wqdiff {

struct TrainingConfig {
  int steps = 200;              // T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool scale_betas = true;      // beta range is quoted for 1000 steps; rescale by 1000 / T
  std::vector<std::size_t> hidden{128, 128};
  std::size_t embedding_dim = 16;
  std::size_t k = 8;            // spectral principal components
  std::size_t batch_size = 256;
  double learning_rate = 2e-3;
  double min_learning_rate = 1e-4;  // cosine decay floor
  int max_epochs = 300;
  int patience = 40;
  double validation_fraction = 0.1;
  std::uint64_t seed = 42;

  void validate() const {
    if (steps < 1) throw ConfigError("train.steps must be >= 1");
    if (!(beta_start > 0 && beta_end >= beta_start)) throw ConfigError("train.beta_start/beta_end must satisfy 0 < start <= end");
    if (hidden.empty()) throw ConfigError("train.hidden must list at least one layer");
    for (auto h : hidden)
      if (h == 0) throw ConfigError("train.hidden sizes must be positive");
    if (embedding_dim == 0 || embedding_dim % 2) throw ConfigError("train.embedding_dim must be positive and even");
    if (k == 0 || k > 32) throw ConfigError("train.k must lie in [1, 32]");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(learning_rate > 0) || !(min_learning_rate > 0) || min_learning_rate > learning_rate)
      throw ConfigError("train.learning_rate must be positive and >= train.min_learning_rate");
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) throw ConfigError("train.patience must lie in [1, max_epochs)");
    if (!(validation_fraction > 0 && validation_fraction < 1)) throw ConfigError("train.validation_fraction must lie in (0, 1)");
  }
};

/// beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod_{s<=t} alpha_s for
/// t = 1..T. Index 0 holds the t = 0 sentinel (beta 0, alpha_bar 1).
class NoiseSchedule {
public:
  NoiseSchedule() = default;

  explicit NoiseSchedule(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
    beta_.assign(1, 0.0);
    beta_.insert(beta_.end(), betas.begin(), betas.end());
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    alpha_[0] = alpha_bar_[0] = 1.0;
    for (std::size_t t = 1; t < beta_.size(); ++t) {
      if (!(beta_[t] > 0 && beta_[t] < 1)) throw ConfigError("every beta_t must lie in (0, 1)");
      alpha_[t] = 1.0 - beta_[t];
      alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    }
  }

  /// Linearly spaced betas from `start` to `end`.
  static NoiseSchedule linear(int steps, double start, double end) {
    if (steps < 1) throw ConfigError("noise schedule needs at least one step");
    std::vector<double> b(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
      b[static_cast<std::size_t>(i)] = steps == 1 ? start : start + (end - start) * i / (steps - 1);
    return NoiseSchedule(std::move(b));
  }

  static NoiseSchedule from_config(const TrainingConfig& c) {
    const double scale = c.scale_betas ? 1000.0 / c.steps : 1.0;
    return linear(c.steps, c.beta_start * scale, c.beta_end * scale);
  }

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
  double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  const std::vector<double>& betas() const { return beta_; }

  /// Posterior variance sigma_t^2 = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
  double posterior_variance(int t) const {
    return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
  }

  /// Strictly decreasing alpha_bar, alpha_bar_1 > 0.9, alpha_bar_T < 0.01.
  void validate_invariants() const {
    for (int t = 1; t <= steps(); ++t)
      if (!(alpha_bar(t) < alpha_bar(t - 1))) throw ConfigError("alpha_bar must be strictly decreasing");
    if (!(alpha_bar(1) > 0.9)) throw ConfigError("alpha_bar_1 must exceed 0.9");
    if (!(alpha_bar(steps()) < 0.01)) throw ConfigError("alpha_bar_T must be below 0.01; use more steps or larger betas");
  }

private:
  std::vector<double> beta_, alpha_, alpha_bar_;
};

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
inline Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                                     const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps())
    throw StepOutOfRange("t = " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps()) + "]");
  if (x0.size() != eps.size()) throw LengthMismatch("x0 and eps differ in dimension");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// Column-wise forward noising of a batch with per-column steps.
inline Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& x0, const std::vector<int>& steps, const Eigen::MatrixXd& eps,
                                     const NoiseSchedule& schedule) {
  Eigen::MatrixXd x(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const int t = steps[static_cast<std::size_t>(j)];
    if (t < 1 || t > schedule.steps()) throw StepOutOfRange("t = " + std::to_string(t));
    const double ab = schedule.alpha_bar(t);
    x.col(j) = std::sqrt(ab) * x0.col(j) + std::sqrt(1.0 - ab) * eps.col(j);
  }
  return x;
}

struct LossResult {
  double value = 0.0;
  DenoiserGradients gradients;
};

/// Mean over the batch of ||eps - eps_hat(x_t, t, c)||^2 with the given
/// steps and noise; gradients are exact for every denoiser parameter.
inline LossResult diffusion_loss(const Denoiser& model, const NoiseSchedule& schedule, const Eigen::MatrixXd& x0,
                                 const Eigen::MatrixXd& condition, const std::vector<int>& steps,
                                 const Eigen::MatrixXd& eps, bool with_gradients = true) {
  if (x0.cols() == 0) throw TooFewSamples("loss needs a nonempty batch");
  const auto batch = static_cast<double>(x0.cols());
  const Eigen::MatrixXd x_t = forward_noise(x0, steps, eps, schedule);
  const Eigen::MatrixXd input = model.make_input(x_t, steps, schedule.steps(), condition);
  LossResult r;
  if (!with_gradients) {
    r.value = (model.forward(input) - eps).squaredNorm() / batch;
    return r;
  }
  model.forward_backward(
      input,
      [&](const Eigen::MatrixXd& eps_hat) {
        const Eigen::MatrixXd diff = eps_hat - eps;
        r.value = diff.squaredNorm() / batch;
        return Eigen::MatrixXd((2.0 / batch) * diff);
      },
      r.gradients);
  return r;
}

/// Draws t ~ U{1..T} and eps ~ N(0, I) per column.
inline void draw_steps_and_noise(Rng& rng, int total_steps, Eigen::Index cols, std::vector<int>& steps,
                                 Eigen::MatrixXd& eps) {
  steps.resize(static_cast<std::size_t>(cols));
  eps.resize(Denoiser::kTargetDim, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    steps[static_cast<std::size_t>(j)] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(total_steps)));
    for (Eigen::Index d = 0; d < Denoiser::kTargetDim; ++d) eps(d, j) = rng.normal();
  }
}

inline LossResult diffusion_loss(const Denoiser& model, const NoiseSchedule& schedule, const Eigen::MatrixXd& x0,
                                 const Eigen::MatrixXd& condition, Rng& rng, bool with_gradients = true) {
  std::vector<int> steps;
  Eigen::MatrixXd eps;
  draw_steps_and_noise(rng, schedule.steps(), x0.cols(), steps, eps);
  return diffusion_loss(model, schedule, x0, condition, steps, eps, with_gradients);
}

/// Standardized training data: one column per sample.
struct DiffusionDataset {
  Eigen::MatrixXd targets;     // 3 x N
  Eigen::MatrixXd conditions;  // c x N
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Denoiser model;
  std::vector<EpochRecord> history;  // entry 0 is the untrained model
  int best_epoch = 0;
  bool stopped_early = false;
};

namespace detail {

inline Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx, std::size_t begin,
                                      std::size_t end) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out.col(static_cast<Eigen::Index>(i - begin)) = m.col(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace detail

/// Adam on the epsilon-MSE objective with cosine learning-rate decay. A
/// validation holdout (a fraction of the training data) is scored each epoch
/// on noise drawn once up front; training stops after `patience` epochs
/// without improvement and the best weights are returned. Single-threaded and
/// deterministic under `config.seed`.
inline TrainResult train(const DiffusionDataset& data, const NoiseSchedule& schedule, const TrainingConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(data.targets.cols());
  if (n < 10) throw TooFewSamples("training needs at least 10 samples, got " + std::to_string(n));
  if (data.conditions.cols() != data.targets.cols()) throw LengthMismatch("targets and conditions differ in sample count");

  Rng split_rng(derive_seed(config.seed, "train.holdout"));
  Rng batch_rng(derive_seed(config.seed, "train.batches"));
  Rng fixed_rng(derive_seed(config.seed, "train.fixed-noise"));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  detail::shuffle(order, split_rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n))));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const Eigen::MatrixXd val_x0 = detail::gather_columns(data.targets, val_idx, 0, val_idx.size());
  const Eigen::MatrixXd val_c = detail::gather_columns(data.conditions, val_idx, 0, val_idx.size());
  std::vector<int> val_steps;
  Eigen::MatrixXd val_eps;
  draw_steps_and_noise(fixed_rng, schedule.steps(), val_x0.cols(), val_steps, val_eps);

  const Eigen::MatrixXd tr_x0 = detail::gather_columns(data.targets, train_idx, 0, train_idx.size());
  const Eigen::MatrixXd tr_c = detail::gather_columns(data.conditions, train_idx, 0, train_idx.size());
  std::vector<int> tr_steps;
  Eigen::MatrixXd tr_eps;
  draw_steps_and_noise(fixed_rng, schedule.steps(), tr_x0.cols(), tr_steps, tr_eps);

  TrainResult result;
  result.model = Denoiser(static_cast<std::size_t>(data.conditions.rows()), config.hidden, config.embedding_dim,
                          derive_seed(config.seed, "train.init"));
  Adam adam(result.model, config.learning_rate);

  const auto val_loss = [&](const Denoiser& m) {
    return diffusion_loss(m, schedule, val_x0, val_c, val_steps, val_eps, false).value;
  };
  result.history.push_back({0, diffusion_loss(result.model, schedule, tr_x0, tr_c, tr_steps, tr_eps, false).value,
                            val_loss(result.model), config.learning_rate});

  Denoiser best = result.model;
  double best_val = result.history.front().validation_loss;
  int since_best = 0;
  std::vector<int> steps;
  Eigen::MatrixXd eps;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double progress = static_cast<double>(epoch - 1) / std::max(1, config.max_epochs - 1);
    const double lr = config.min_learning_rate +
                      0.5 * (config.learning_rate - config.min_learning_rate) * (1.0 + std::cos(std::numbers::pi * progress));
    adam.set_learning_rate(lr);
    detail::shuffle(train_idx, batch_rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
      const Eigen::MatrixXd x0 = detail::gather_columns(data.targets, train_idx, start, end);
      const Eigen::MatrixXd c = detail::gather_columns(data.conditions, train_idx, start, end);
      draw_steps_and_noise(batch_rng, schedule.steps(), x0.cols(), steps, eps);
      const auto loss = diffusion_loss(result.model, schedule, x0, c, steps, eps, true);
      if (!std::isfinite(loss.value))
        throw DivergenceDetected("non-finite training loss at epoch " + std::to_string(epoch));
      adam.step(result.model, loss.gradients);
      sum += loss.value;
      ++batches;
    }
    if (!result.model.all_finite()) throw DivergenceDetected("non-finite parameters at epoch " + std::to_string(epoch));
    const double v = val_loss(result.model);
    if (!std::isfinite(v)) throw DivergenceDetected("non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, sum / static_cast<double>(batches), v, lr});
    if (v < best_val) {
      best_val = v;
      best = result.model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.model = std::move(best);
  return result;
}

/// Noise estimate for a batch sharing one step: (x_t, t, condition) -> eps_hat.
using EpsilonFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x_t, int t, const Eigen::MatrixXd& condition)>;

inline EpsilonFn epsilon_fn(const Denoiser& model, const NoiseSchedule& schedule) {
  return [&model, total = schedule.steps()](const Eigen::MatrixXd& x_t, int t, const Eigen::MatrixXd& c) {
    return model.forward(model.make_input(x_t, t, total, c));
  };
}

/// Fills `z` (3 x B) with standard normal draws for one reverse step.
using NoiseFn = std::function<void(Eigen::MatrixXd& z)>;

/// Ancestral reverse process from x_T:
///   x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t) + sigma_t z,
/// with sigma_t^2 the posterior variance and z = 0 at t = 1. `sigma_scale`
/// multiplies sigma_t; 0 gives the deterministic mean path.
inline Eigen::MatrixXd reverse_process(const EpsilonFn& eps_fn, const NoiseSchedule& schedule, const Eigen::MatrixXd& condition,
                                       Eigen::MatrixXd x, const NoiseFn& noise, double sigma_scale = 1.0) {
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (int t = schedule.steps(); t >= 1; --t) {
    const Eigen::MatrixXd eps_hat = eps_fn(x, t, condition);
    const double a = schedule.alpha(t);
    const double coef = (1.0 - a) / std::sqrt(1.0 - schedule.alpha_bar(t));
    x = (x - coef * eps_hat) / std::sqrt(a);
    if (t > 1 && sigma_scale != 0.0) {
      noise(z);
      x += sigma_scale * std::sqrt(schedule.posterior_variance(t)) * z;
    }
  }
  return x;
}

/// K draws (3 x K, standardized space) under one condition vector.
inline Eigen::MatrixXd sample(const Denoiser& model, const NoiseSchedule& schedule, const Eigen::VectorXd& condition,
                              std::size_t draws, Rng& rng) {
  const auto k = static_cast<Eigen::Index>(draws);
  const Eigen::MatrixXd c = condition.replicate(1, k);
  const auto fill = [&rng](Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index d = 0; d < m.rows(); ++d) m(d, j) = rng.normal();
  };
  Eigen::MatrixXd x_T(Denoiser::kTargetDim, k);
  fill(x_T);
  return reverse_process(epsilon_fn(model, schedule), schedule, c, std::move(x_T), fill);
}

}  // namespace wqdiff
