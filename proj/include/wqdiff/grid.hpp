#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wqdiff/error.hpp"

namespace wqdiff {

/// Uniform wavelength grid in nanometres. The default is the 400-750 nm, 1 nm
/// grid shared by every spectrum in a dataset.
class WavelengthGrid {
public:
  constexpr WavelengthGrid() = default;

  WavelengthGrid(double start_nm, double end_nm, double step_nm)
      : start_nm_(start_nm), end_nm_(end_nm), step_nm_(step_nm) {
    if (!(step_nm > 0) || !(end_nm > start_nm))
      throw ConfigError("wavelength grid must be strictly increasing");
    const double n = (end_nm - start_nm) / step_nm;
    if (std::abs(n - std::round(n)) > 1e-9)
      throw ConfigError("wavelength grid span is not a multiple of the step");
    count_ = static_cast<std::size_t>(std::llround(n)) + 1;
  }

  constexpr double start_nm() const { return start_nm_; }
  constexpr double end_nm() const { return end_nm_; }
  constexpr double step_nm() const { return step_nm_; }
  constexpr std::size_t count() const { return count_; }
  constexpr std::size_t size() const { return count_; }

  constexpr double wavelength(std::size_t i) const { return start_nm_ + step_nm_ * static_cast<double>(i); }

  /// Index of the band nearest to `nm`, or `count()` when off-grid by more than half a step.
  std::size_t index_of(double nm) const {
    const double x = (nm - start_nm_) / step_nm_;
    const double r = std::round(x);
    if (r < 0 || r >= static_cast<double>(count_) || std::abs(x - r) > 0.5) return count_;
    return static_cast<std::size_t>(r);
  }

  std::vector<double> wavelengths() const {
    std::vector<double> out(count_);
    for (std::size_t i = 0; i < count_; ++i) out[i] = wavelength(i);
    return out;
  }

  friend bool operator==(const WavelengthGrid&, const WavelengthGrid&) = default;

private:
  double start_nm_ = 400.0;
  double end_nm_ = 750.0;
  double step_nm_ = 1.0;
  std::size_t count_ = 351;
};

inline const WavelengthGrid& default_grid() {
  static const WavelengthGrid grid{};
  return grid;
}

}  // namespace wqdiff
