#pragma once

// Condition encoder (spectral principal components + salinity) and the
// invertible target standardization.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wqdiff/error.hpp"

namespace wqdiff {

/// What fit_encoder does when the data support fewer than k components.
enum class RankPolicy {
  Reduce,  // keep only the supported components and record a warning
  Keep,    // keep k components; the extra ones carry ~zero variance
  Throw,   // raise RankDeficient
};

struct SpectralEncoder {
  bool fitted = false;
  std::size_t requested_k = 0;
  Eigen::VectorXd band_mean;
  Eigen::VectorXd band_std;
  Eigen::MatrixXd components;   // bands x k, orthonormal columns
  Eigen::VectorXd eigenvalues;  // all eigenvalues, descending
  double salinity_mean = 0.0;
  double salinity_std = 1.0;
  std::string warning;

  std::size_t k() const { return static_cast<std::size_t>(components.cols()); }
  std::size_t bands() const { return static_cast<std::size_t>(band_mean.size()); }
  std::size_t condition_dim() const { return k() + 1; }

  /// Eigenvalue share of each retained component.
  std::vector<double> explained_variance_ratio() const {
    const double total = eigenvalues.sum();
    std::vector<double> out(k());
    for (std::size_t i = 0; i < k(); ++i) out[i] = total > 0 ? eigenvalues(static_cast<Eigen::Index>(i)) / total : 0.0;
    return out;
  }
};

namespace detail {

inline double sample_std(const Eigen::VectorXd& v, double mean) {
  if (v.size() < 2) return 1.0;
  const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
  // Constant columns (up to rounding in the mean) keep unit scale.
  return sd > 1e-12 * std::abs(mean) && sd > 0 ? sd : 1.0;
}

}  // namespace detail

/// Standardizes every band (zero-variance bands keep unit scale), then takes
/// the top-k eigenvectors of the band covariance. Each eigenvector is signed
/// so its largest-magnitude entry is positive.
inline SpectralEncoder fit_encoder(const std::vector<std::vector<double>>& rrs, std::span<const double> salinity,
                                   std::size_t k, RankPolicy policy = RankPolicy::Reduce) {
  const std::size_t n = rrs.size();
  if (k == 0 || k > 32) throw ConfigError("encoder k must lie in [1, 32]");
  if (n < k + 1) throw TooFewSamples("fit_encoder needs at least k + 1 = " + std::to_string(k + 1) + " samples");
  if (salinity.size() != n) throw LengthMismatch("rrs and salinity differ in length");
  const std::size_t bands = rrs.front().size();
  if (bands < k) throw ConfigError("encoder k exceeds the number of bands");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bands));
  for (std::size_t i = 0; i < n; ++i) {
    if (rrs[i].size() != bands) throw GridMismatch("spectra differ in band count");
    for (std::size_t b = 0; b < bands; ++b) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = rrs[i][b];
  }

  SpectralEncoder enc;
  enc.requested_k = k;
  enc.band_mean = x.colwise().mean().transpose();
  enc.band_std.resize(static_cast<Eigen::Index>(bands));
  for (Eigen::Index b = 0; b < x.cols(); ++b) enc.band_std(b) = detail::sample_std(x.col(b), enc.band_mean(b));
  x.rowwise() -= enc.band_mean.transpose();
  x.array().rowwise() /= enc.band_std.transpose().array();

  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
  // Eigen returns ascending order.
  enc.eigenvalues = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

  const double tol = 1e-10 * std::max(1.0, enc.eigenvalues.cwiseAbs().maxCoeff()) * static_cast<double>(bands);
  std::size_t rank = 0;
  while (rank < static_cast<std::size_t>(enc.eigenvalues.size()) && enc.eigenvalues(static_cast<Eigen::Index>(rank)) > tol) ++rank;

  std::size_t keep = k;
  if (rank < k) {
    const std::string msg = "data support only " + std::to_string(rank) + " of " + std::to_string(k) + " requested components";
    if (policy == RankPolicy::Throw) throw RankDeficient(msg);
    if (policy == RankPolicy::Reduce) {
      keep = std::max<std::size_t>(rank, 1);
      enc.warning = msg + "; k reduced to " + std::to_string(keep);
    } else {
      enc.warning = msg;
    }
  }

  enc.components = vectors.leftCols(static_cast<Eigen::Index>(keep));
  for (Eigen::Index c = 0; c < enc.components.cols(); ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < enc.components.rows(); ++r)
      if (std::abs(enc.components(r, c)) > std::abs(enc.components(arg, c)) + 1e-15) arg = r;
    if (enc.components(arg, c) < 0) enc.components.col(c) *= -1.0;
  }

  Eigen::VectorXd s(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) s(static_cast<Eigen::Index>(i)) = salinity[i];
  enc.salinity_mean = s.mean();
  enc.salinity_std = detail::sample_std(s, enc.salinity_mean);
  enc.fitted = true;
  return enc;
}

/// Standardized band vector projected onto the retained components, followed
/// by the z-scored salinity.
inline std::vector<double> encode_condition(std::span<const double> rrs, double salinity, const SpectralEncoder& enc) {
  if (!enc.fitted) throw EncoderNotFitted("encoder has not been fitted");
  if (rrs.size() != enc.bands())
    throw GridMismatch("spectrum has " + std::to_string(rrs.size()) + " bands, encoder expects " + std::to_string(enc.bands()));
  Eigen::VectorXd z(static_cast<Eigen::Index>(rrs.size()));
  for (Eigen::Index b = 0; b < z.size(); ++b)
    z(b) = (rrs[static_cast<std::size_t>(b)] - enc.band_mean(b)) / enc.band_std(b);
  const Eigen::VectorXd scores = enc.components.transpose() * z;
  std::vector<double> out(scores.data(), scores.data() + scores.size());
  out.push_back((salinity - enc.salinity_mean) / enc.salinity_std);
  return out;
}

/// Per-dimension log(x + shift) followed by a z-score, fitted on training
/// targets only.
struct TargetTransform {
  static constexpr std::size_t kDims = 3;
  using Vec = std::array<double, kDims>;

  bool log = true;
  Vec shift{1e-3, 1e-3, 1e-3};
  Vec mean{0, 0, 0};
  Vec stddev{1, 1, 1};

  double forward(std::size_t d, double x) const {
    const double v = log ? std::log(std::max(x + shift[d], 1e-300)) : x;
    return (v - mean[d]) / stddev[d];
  }

  double inverse(std::size_t d, double z) const {
    const double v = z * stddev[d] + mean[d];
    return log ? std::exp(v) - shift[d] : v;
  }

  Vec forward(const Vec& x) const {
    Vec out{};
    for (std::size_t d = 0; d < kDims; ++d) out[d] = forward(d, x[d]);
    return out;
  }

  Vec inverse(const Vec& z) const {
    Vec out{};
    for (std::size_t d = 0; d < kDims; ++d) out[d] = inverse(d, z[d]);
    return out;
  }
};

inline TargetTransform fit_target_transform(const std::vector<TargetTransform::Vec>& targets, bool use_log = true) {
  if (targets.size() < 2) throw TooFewSamples("target transform needs at least 2 samples");
  TargetTransform tf;
  tf.log = use_log;
  for (std::size_t d = 0; d < TargetTransform::kDims; ++d) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (use_log && targets[i][d] + tf.shift[d] <= 0)
        throw ConfigError("log target transform needs targets > -shift");
      v(static_cast<Eigen::Index>(i)) = use_log ? std::log(targets[i][d] + tf.shift[d]) : targets[i][d];
    }
    tf.mean[d] = v.mean();
    tf.stddev[d] = detail::sample_std(v, tf.mean[d]);
  }
  return tf;
}

}  // namespace wqdiff
