#pragma once

// Radiometric preprocessing: reflectance from irradiance/radiance scans,
// geometry normalization, automated quality control, and grid trimming.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wqdiff/error.hpp"
#include "wqdiff/grid.hpp"
#include "wqdiff/text.hpp"
#include "wqdiff/time.hpp"

namespace wqdiff {

/// Sun-target-view angles in degrees.
struct ViewGeometry {
  double solar_zenith_deg = 30.0;
  double view_zenith_deg = 40.0;
  double relative_azimuth_deg = 120.0;

  friend bool operator==(const ViewGeometry&, const ViewGeometry&) = default;
};

inline bool geometry_in_domain(const ViewGeometry& g) {
  return g.solar_zenith_deg >= 0 && g.solar_zenith_deg <= 90 && g.view_zenith_deg >= 0 &&
         g.view_zenith_deg <= 90 && g.relative_azimuth_deg >= 0 && g.relative_azimuth_deg <= 180;
}

/// One instrument scan, already on the shared wavelength grid.
struct RadiometricScan {
  UtcTime timestamp;
  std::vector<double> ed;    // W m^-2 nm^-1
  std::vector<double> lw;    // W m^-2 sr^-1 nm^-1
  std::vector<double> lsky;  // W m^-2 sr^-1 nm^-1
  ViewGeometry geometry;
  std::string lw_source = "lw_nadir";  // which radiance sensor(s) fed `lw`
};

enum class QcCode { NegativeBands, Spike, LowEd, Saturation, OutOfRangeShape };

inline const char* to_string(QcCode c) {
  switch (c) {
    case QcCode::NegativeBands: return "NEGATIVE_BANDS";
    case QcCode::Spike: return "SPIKE";
    case QcCode::LowEd: return "LOW_ED";
    case QcCode::Saturation: return "SATURATION";
    case QcCode::OutOfRangeShape: return "OUT_OF_RANGE_SHAPE";
  }
  return "UNKNOWN";
}

struct QcResult {
  std::vector<QcCode> reasons;

  bool accepted() const { return reasons.empty(); }
  bool has(QcCode c) const { return std::find(reasons.begin(), reasons.end(), c) != reasons.end(); }

  void add(QcCode c) {
    if (!has(c)) reasons.push_back(c);
  }

  void merge(const QcResult& other) {
    for (auto c : other.reasons) add(c);
  }

  friend bool operator==(const QcResult&, const QcResult&) = default;
};

struct ReflectanceSpectrum {
  UtcTime timestamp;
  std::vector<double> rrs;   // sr^-1
  std::optional<QcResult> qc;  // empty until quality_filter runs
};

struct QcThresholds {
  double max_negative_fraction = 0.02;
  double spike_factor = 5.0;    // allowed |rrs - local median| as a multiple of the median
  std::size_t spike_half_window = 5;
  double spike_floor = 1e-5;    // sr^-1; median floor so near-zero red bands do not trip SPIKE
  double rrs_ceiling = 0.1;     // sr^-1
  double min_ed = 0.01;         // W m^-2 nm^-1
  double saturation_level = std::numeric_limits<double>::infinity();
};

constexpr double kDefaultSkylightFactor = 0.028;

/// Rrs = (Lw - rho * Lsky) / Ed, band by band.
inline ReflectanceSpectrum compute_brf(const RadiometricScan& scan, double rho = kDefaultSkylightFactor) {
  const auto n = scan.ed.size();
  if (scan.lw.size() != n || scan.lsky.size() != n)
    throw GridMismatch("ed/lw/lsky have " + std::to_string(n) + "/" + std::to_string(scan.lw.size()) + "/" +
                       std::to_string(scan.lsky.size()) + " bands");
  if (!(rho >= 0.0 && rho <= 0.1)) throw ConfigError("skylight factor rho must lie in [0, 0.1]");
  ReflectanceSpectrum out{scan.timestamp, std::vector<double>(n), std::nullopt};
  for (std::size_t i = 0; i < n; ++i) {
    if (!(scan.ed[i] > 0.0))
      throw NonPositiveIrradiance("ed <= 0 at band " + std::to_string(i) + " of scan " +
                                  format_iso8601(scan.timestamp));
    out.rrs[i] = (scan.lw[i] - rho * scan.lsky[i]) / scan.ed[i];
  }
  return out;
}

/// Per-band multiplicative correction factors on a rectilinear
/// (solar zenith, view zenith, relative azimuth) grid.
class BrdfLut {
public:
  BrdfLut(std::vector<double> sza, std::vector<double> vza, std::vector<double> raa,
          std::vector<double> wavelengths, std::vector<double> factors, ViewGeometry reference = {})
      : sza_(std::move(sza)),
        vza_(std::move(vza)),
        raa_(std::move(raa)),
        wl_(std::move(wavelengths)),
        factors_(std::move(factors)),
        reference_(reference) {
    for (const auto* axis : {&sza_, &vza_, &raa_, &wl_}) {
      if (axis->empty()) throw ConfigError("BRDF LUT axis is empty");
      if (!std::is_sorted(axis->begin(), axis->end()) ||
          std::adjacent_find(axis->begin(), axis->end()) != axis->end())
        throw ConfigError("BRDF LUT axis must be strictly increasing");
    }
    if (factors_.size() != sza_.size() * vza_.size() * raa_.size() * wl_.size())
      throw ConfigError("BRDF LUT is not a complete grid");
    for (double f : factors_)
      if (!(f > 0.5 && f < 2.0)) throw ConfigError("BRDF LUT factor outside (0.5, 2.0)");
    const auto ref = factors_at(reference_, wl_);
    for (double f : ref)
      if (std::abs(f - 1.0) > 1e-9) throw ConfigError("BRDF LUT is not identity at the reference geometry");
  }

  /// Identity table on the documented default grid
  /// (sza 0-80 step 10, vza 0-60 step 10, raa 0-180 step 30).
  static BrdfLut identity(const WavelengthGrid& grid = default_grid()) {
    auto axis = [](double lo, double hi, double step) {
      std::vector<double> v;
      for (double x = lo; x <= hi + 1e-9; x += step) v.push_back(x);
      return v;
    };
    auto sza = axis(0, 80, 10), vza = axis(0, 60, 10), raa = axis(0, 180, 30);
    const std::vector<double> wl{grid.start_nm(), grid.end_nm()};
    std::vector<double> f(sza.size() * vza.size() * raa.size() * wl.size(), 1.0);
    return BrdfLut(std::move(sza), std::move(vza), std::move(raa), wl, std::move(f));
  }

  const std::vector<double>& sza_axis() const { return sza_; }
  const std::vector<double>& vza_axis() const { return vza_; }
  const std::vector<double>& raa_axis() const { return raa_; }
  const std::vector<double>& wavelength_axis() const { return wl_; }
  const ViewGeometry& reference() const { return reference_; }

  double node(std::size_t i, std::size_t j, std::size_t k, std::size_t w) const {
    return factors_[((i * vza_.size() + j) * raa_.size() + k) * wl_.size() + w];
  }

  /// Trilinear interpolation in angle, linear in wavelength. Throws
  /// GeometryOutOfRange outside the table (no extrapolation).
  std::vector<double> factors_at(const ViewGeometry& g, std::span<const double> wavelengths) const {
    const auto [i0, ti] = locate(sza_, g.solar_zenith_deg, "solar zenith");
    const auto [j0, tj] = locate(vza_, g.view_zenith_deg, "view zenith");
    const auto [k0, tk] = locate(raa_, g.relative_azimuth_deg, "relative azimuth");
    const auto i1 = std::min(i0 + 1, sza_.size() - 1);
    const auto j1 = std::min(j0 + 1, vza_.size() - 1);
    const auto k1 = std::min(k0 + 1, raa_.size() - 1);

    std::vector<double> per_node(wl_.size());
    for (std::size_t w = 0; w < wl_.size(); ++w) {
      const double c00 = node(i0, j0, k0, w) * (1 - tk) + node(i0, j0, k1, w) * tk;
      const double c01 = node(i0, j1, k0, w) * (1 - tk) + node(i0, j1, k1, w) * tk;
      const double c10 = node(i1, j0, k0, w) * (1 - tk) + node(i1, j0, k1, w) * tk;
      const double c11 = node(i1, j1, k0, w) * (1 - tk) + node(i1, j1, k1, w) * tk;
      const double c0 = c00 * (1 - tj) + c01 * tj;
      const double c1 = c10 * (1 - tj) + c11 * tj;
      per_node[w] = c0 * (1 - ti) + c1 * ti;
    }

    std::vector<double> out(wavelengths.size());
    for (std::size_t b = 0; b < wavelengths.size(); ++b) {
      const double x = wavelengths[b];
      if (wl_.size() == 1) {
        out[b] = per_node[0];
        continue;
      }
      if (x < wl_.front() - 1e-9 || x > wl_.back() + 1e-9)
        throw GridMismatch("BRDF LUT does not cover " + format_double(x) + " nm");
      auto it = std::upper_bound(wl_.begin(), wl_.end(), x);
      std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - wl_.begin()), wl_.size() - 1);
      std::size_t lo = hi - 1;
      const double t = std::clamp((x - wl_[lo]) / (wl_[hi] - wl_[lo]), 0.0, 1.0);
      out[b] = per_node[lo] * (1 - t) + per_node[hi] * t;
    }
    return out;
  }

private:
  static std::pair<std::size_t, double> locate(const std::vector<double>& axis, double x, const char* what) {
    constexpr double tol = 1e-9;
    if (!(x >= axis.front() - tol && x <= axis.back() + tol))
      throw GeometryOutOfRange(std::string(what) + " " + format_double(x) + " deg outside [" +
                               format_double(axis.front()) + ", " + format_double(axis.back()) + "]");
    if (axis.size() == 1) return {0, 0.0};
    auto it = std::upper_bound(axis.begin(), axis.end(), x);
    std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - axis.begin()), axis.size() - 1);
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double t = std::clamp((x - axis[lo]) / (axis[hi] - axis[lo]), 0.0, 1.0);
    return {lo, t};
  }

  std::vector<double> sza_, vza_, raa_, wl_;
  std::vector<double> factors_;
  ViewGeometry reference_;
};

/// Multiplies `spec.rrs` band-wise by the LUT factor interpolated at `geometry`.
inline ReflectanceSpectrum brdf_normalize(const ReflectanceSpectrum& spec, const ViewGeometry& geometry,
                                          const BrdfLut& lut, const WavelengthGrid& grid = default_grid()) {
  if (spec.rrs.size() != grid.count())
    throw GridMismatch("spectrum has " + std::to_string(spec.rrs.size()) + " bands, grid has " +
                       std::to_string(grid.count()));
  const auto wl = grid.wavelengths();
  const auto f = lut.factors_at(geometry, wl);
  ReflectanceSpectrum out = spec;
  for (std::size_t i = 0; i < out.rrs.size(); ++i) out.rrs[i] *= f[i];
  return out;
}

/// Shape checks on a reflectance spectrum: NEGATIVE_BANDS, SPIKE and
/// OUT_OF_RANGE_SHAPE (non-finite values or Rrs above the ceiling).
inline QcResult quality_filter(const ReflectanceSpectrum& spec, const QcThresholds& th = {}) {
  QcResult qc;
  const auto& r = spec.rrs;
  const std::size_t n = r.size();
  if (n == 0) {
    qc.add(QcCode::OutOfRangeShape);
    return qc;
  }

  std::size_t negative = 0;
  for (double v : r) {
    if (!std::isfinite(v)) qc.add(QcCode::OutOfRangeShape);
    else if (v < 0.0) ++negative;
    else if (v > th.rrs_ceiling) qc.add(QcCode::OutOfRangeShape);
  }
  if (static_cast<double>(negative) > th.max_negative_fraction * static_cast<double>(n))
    qc.add(QcCode::NegativeBands);

  std::vector<double> window;
  window.reserve(2 * th.spike_half_window);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(r[i])) continue;
    window.clear();
    const std::size_t lo = i >= th.spike_half_window ? i - th.spike_half_window : 0;
    const std::size_t hi = std::min(n - 1, i + th.spike_half_window);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i && std::isfinite(r[j])) window.push_back(r[j]);
    if (window.empty()) continue;
    const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
    std::nth_element(window.begin(), mid, window.end());
    double median = *mid;
    if (window.size() % 2 == 0) {
      const double lower = *std::max_element(window.begin(), mid);
      median = 0.5 * (median + lower);
    }
    const double scale = std::max(std::abs(median), th.spike_floor);
    if (std::abs(r[i] - median) > th.spike_factor * scale) {
      qc.add(QcCode::Spike);
      break;
    }
  }
  return qc;
}

/// Instrument-level checks that need the raw scan: LOW_ED and SATURATION.
inline QcResult quality_filter_scan(const RadiometricScan& scan, const QcThresholds& th = {}) {
  QcResult qc;
  for (double e : scan.ed)
    if (!(e >= th.min_ed)) {
      qc.add(QcCode::LowEd);
      break;
    }
  for (const auto* channel : {&scan.ed, &scan.lw, &scan.lsky})
    for (double v : *channel)
      if (v >= th.saturation_level) qc.add(QcCode::Saturation);
  return qc;
}

/// A spectrum on an arbitrary, increasing set of native wavelengths.
struct RawSpectrum {
  std::vector<double> wavelength_nm;
  std::vector<double> values;
};

/// Selects the native sample nearest to each grid wavelength. Requires the
/// native range to span the grid; ties go to the shorter wavelength.
inline RawSpectrum trim_to_grid(const RawSpectrum& raw, const WavelengthGrid& grid = default_grid()) {
  const auto& wl = raw.wavelength_nm;
  if (wl.size() != raw.values.size()) throw GridMismatch("wavelength/value length mismatch");
  constexpr double tol = 1e-9;
  if (wl.empty() || wl.front() > grid.start_nm() + tol || wl.back() < grid.end_nm() - tol)
    throw InsufficientCoverage(
        wl.empty() ? std::string("empty spectrum")
                   : "native range " + format_double(wl.front()) + "-" + format_double(wl.back()) +
                         " nm does not span " + format_double(grid.start_nm()) + "-" +
                         format_double(grid.end_nm()) + " nm");
  if (!std::is_sorted(wl.begin(), wl.end())) throw GridMismatch("native wavelengths are not sorted");

  RawSpectrum out;
  out.wavelength_nm = grid.wavelengths();
  out.values.resize(grid.count());
  std::size_t j = 0;
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const double target = out.wavelength_nm[i];
    while (j + 1 < wl.size() && std::abs(wl[j + 1] - target) < std::abs(wl[j] - target)) ++j;
    out.values[i] = raw.values[j];
  }
  return out;
}

}  // namespace wqdiff
