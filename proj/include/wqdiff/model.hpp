#pragma once

// Trained retrieval model: encoder, target transform, schedule and denoiser,
// plus fitting from matched samples and batched posterior prediction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "wqdiff/diffusion.hpp"
#include "wqdiff/encoder.hpp"
#include "wqdiff/error.hpp"
#include "wqdiff/ingest.hpp"
#include "wqdiff/rng.hpp"

namespace wqdiff {

struct RetrievalModel {
  TrainingConfig config;
  NoiseSchedule schedule;
  SpectralEncoder encoder;
  TargetTransform transform;
  Denoiser denoiser;
};

inline TargetTransform::Vec target_of(const MatchedSample& m) {
  if (!m.tss || !m.cdom)
    throw InputError("matched sample at " + format_iso8601(m.timestamp) + " lacks tss_mg_per_l or cdom440_per_m");
  return {m.nitrate, *m.tss, *m.cdom};
}

struct FitResult {
  RetrievalModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Fits encoder and target transform on `samples` (the training split) only,
/// then trains the denoiser.
inline FitResult fit_retrieval_model(const std::vector<MatchedSample>& samples, const TrainingConfig& config,
                                     RankPolicy policy = RankPolicy::Reduce) {
  config.validate();
  if (samples.size() < std::max<std::size_t>(10, config.k + 1))
    throw TooFewSamples("training needs at least max(10, k + 1) samples, got " + std::to_string(samples.size()));
  FitResult out;
  RetrievalModel& m = out.model;
  m.config = config;
  m.schedule = NoiseSchedule::from_config(config);
  m.schedule.validate_invariants();

  std::vector<std::vector<double>> rrs;
  std::vector<double> sal;
  std::vector<TargetTransform::Vec> targets;
  rrs.reserve(samples.size());
  for (const auto& s : samples) {
    rrs.push_back(s.rrs);
    sal.push_back(s.salinity);
    targets.push_back(target_of(s));
  }
  m.encoder = fit_encoder(rrs, sal, config.k, policy);
  m.transform = fit_target_transform(targets, true);

  DiffusionDataset data;
  const auto n = static_cast<Eigen::Index>(samples.size());
  data.targets.resize(Denoiser::kTargetDim, n);
  data.conditions.resize(static_cast<Eigen::Index>(m.encoder.condition_dim()), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto z = m.transform.forward(targets[static_cast<std::size_t>(j)]);
    for (Eigen::Index d = 0; d < Denoiser::kTargetDim; ++d) data.targets(d, j) = z[static_cast<std::size_t>(d)];
    const auto c = encode_condition(rrs[static_cast<std::size_t>(j)], sal[static_cast<std::size_t>(j)], m.encoder);
    for (Eigen::Index d = 0; d < data.conditions.rows(); ++d) data.conditions(d, j) = c[static_cast<std::size_t>(d)];
  }
  auto tr = wqdiff::train(data, m.schedule, config);
  m.denoiser = std::move(tr.model);
  out.history = std::move(tr.history);
  out.best_epoch = tr.best_epoch;
  out.stopped_early = tr.stopped_early;
  return out;
}

/// Condition matrix (c x N) for a set of spectra and salinities.
inline Eigen::MatrixXd encode_conditions(const std::vector<std::vector<double>>& rrs, const std::vector<double>& salinity,
                                         const SpectralEncoder& enc) {
  if (rrs.size() != salinity.size()) throw LengthMismatch("rrs and salinity differ in length");
  Eigen::MatrixXd c(static_cast<Eigen::Index>(enc.condition_dim()), static_cast<Eigen::Index>(rrs.size()));
  for (std::size_t j = 0; j < rrs.size(); ++j) {
    const auto v = encode_condition(rrs[j], salinity[j], enc);
    for (std::size_t d = 0; d < v.size(); ++d) c(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = v[d];
  }
  return c;
}

struct SamplingOptions {
  std::size_t draws = 64;        // K
  std::uint64_t seed = 42;
  double sigma_scale = 1.0;      // 0: deterministic mean path
  unsigned threads = 1;
  std::size_t chunk = 32;        // conditions per batched reverse pass
};

/// Draws for conditions [first, first + count) of `conditions`, in
/// standardized space: 3 x (count * K), condition j occupying columns
/// j*K .. j*K+K-1. Condition i always uses Rng(derive_seed(seed, i)), so
/// results do not depend on chunking or thread count.
inline Eigen::MatrixXd sample_standardized(const RetrievalModel& m, const Eigen::MatrixXd& conditions, std::size_t first,
                                           std::size_t count, const SamplingOptions& opt) {
  const auto k = static_cast<Eigen::Index>(opt.draws);
  const auto cols = static_cast<Eigen::Index>(count) * k;
  std::vector<Rng> rngs;
  rngs.reserve(count);
  for (std::size_t j = 0; j < count; ++j) rngs.emplace_back(derive_seed(opt.seed, static_cast<std::uint64_t>(first + j)));
  Eigen::MatrixXd c(conditions.rows(), cols);
  for (std::size_t j = 0; j < count; ++j)
    c.middleCols(static_cast<Eigen::Index>(j) * k, k) = conditions.col(static_cast<Eigen::Index>(first + j)).replicate(1, k);
  const auto fill = [&](Eigen::MatrixXd& z) {
    for (std::size_t j = 0; j < count; ++j)
      for (Eigen::Index col = static_cast<Eigen::Index>(j) * k; col < static_cast<Eigen::Index>(j + 1) * k; ++col)
        for (Eigen::Index d = 0; d < z.rows(); ++d) z(d, col) = rngs[j].normal();
  };
  Eigen::MatrixXd x_T(Denoiser::kTargetDim, cols);
  fill(x_T);
  return reverse_process(epsilon_fn(m.denoiser, m.schedule), m.schedule, c, std::move(x_T), fill, opt.sigma_scale);
}

/// K draws in original units under one condition.
inline std::vector<TargetTransform::Vec> sample(const RetrievalModel& m, const std::vector<double>& rrs, double salinity,
                                                const SamplingOptions& opt) {
  if (opt.draws == 0) throw ConfigError("number of draws must be >= 1");
  const Eigen::MatrixXd c = encode_conditions({rrs}, {salinity}, m.encoder);
  const Eigen::MatrixXd z = sample_standardized(m, c, 0, 1, opt);
  std::vector<TargetTransform::Vec> out(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index j = 0; j < z.cols(); ++j) out[static_cast<std::size_t>(j)] = m.transform.inverse({z(0, j), z(1, j), z(2, j)});
  return out;
}

struct PointPrediction {
  TargetTransform::Vec mean{};
  TargetTransform::Vec stddev{};  // sample std (n - 1); zero when K = 1
  bool stddev_defined = true;     // false when K = 1
};

inline PointPrediction summarize_draws(const std::vector<TargetTransform::Vec>& draws) {
  PointPrediction p;
  const auto n = static_cast<double>(draws.size());
  for (const auto& d : draws)
    for (std::size_t i = 0; i < 3; ++i) p.mean[i] += d[i] / n;
  if (draws.size() < 2) {
    p.stddev_defined = false;
    return p;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (const auto& d : draws) s += (d[i] - p.mean[i]) * (d[i] - p.mean[i]);
    p.stddev[i] = std::sqrt(s / (n - 1.0));
  }
  return p;
}

/// Posterior mean and spread over K draws, in original units.
inline PointPrediction predict_point(const RetrievalModel& m, const std::vector<double>& rrs, double salinity,
                                     const SamplingOptions& opt = {}) {
  return summarize_draws(sample(m, rrs, salinity, opt));
}

/// predict_point for many conditions; condition i uses stream index i.
/// Chunks are spread over `opt.threads` workers with fixed assignment.
inline std::vector<PointPrediction> predict_batch(const RetrievalModel& m, const std::vector<std::vector<double>>& rrs,
                                                  const std::vector<double>& salinity, const SamplingOptions& opt = {}) {
  if (opt.draws == 0) throw ConfigError("number of draws must be >= 1");
  const Eigen::MatrixXd c = encode_conditions(rrs, salinity, m.encoder);
  const std::size_t n = rrs.size();
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<PointPrediction> out(n);
  const auto k = opt.draws;
  const auto run = [&](std::size_t worker, std::size_t workers) {
    for (std::size_t ch = worker; ch < n_chunks; ch += workers) {
      const std::size_t first = ch * chunk;
      const std::size_t count = std::min(chunk, n - first);
      const Eigen::MatrixXd z = sample_standardized(m, c, first, count, opt);
      std::vector<TargetTransform::Vec> draws(k);
      for (std::size_t j = 0; j < count; ++j) {
        for (std::size_t d = 0; d < k; ++d) {
          const auto col = static_cast<Eigen::Index>(j * k + d);
          draws[d] = m.transform.inverse({z(0, col), z(1, col), z(2, col)});
        }
        out[first + j] = summarize_draws(draws);
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<std::size_t>(1, n_chunks))));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          run(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace wqdiff
