#pragma once

// Accuracy metrics, salinity-stratified reports, scatter export and a
// floating-mean least-squares periodogram for irregularly sampled series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqdiff/error.hpp"
#include "wqdiff/text.hpp"
#include "wqdiff/time.hpp"

namespace wqdiff {

inline double r2(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw LengthMismatch("r2: y_true and y_pred differ in length");
  if (y_true.size() < 2) throw TooFewSamples("r2 needs at least 2 values");
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  }
  if (ss_tot == 0.0) throw ConstantTruth("r2 is undefined for constant y_true");
  return 1.0 - ss_res / ss_tot;
}

inline double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw LengthMismatch("rmse: y_true and y_pred differ in length");
  if (y_true.empty()) throw TooFewSamples("rmse needs at least 1 value");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  return std::sqrt(s / static_cast<double>(y_true.size()));
}

struct SalinityBin {
  double lo = 0.0;
  double hi = 0.0;  // exclusive, except for the last bin
  std::size_t n = 0;
  std::optional<double> r2;  // empty when n < 2 or truth is constant in the bin
  std::optional<double> rmse;
};

struct MetricReport {
  double r2 = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  std::vector<SalinityBin> bins;
  std::string split = "test";
  std::string reference = "in_situ";  // what predictions were scored against
  std::string warning;
};

inline std::vector<double> default_salinity_edges() { return {0.0, 5.0, 15.0, 25.0, 42.0}; }

inline MetricReport metric_report(std::span<const double> y_true, std::span<const double> y_pred,
                                  std::span<const double> salinity, std::span<const double> edges) {
  if (salinity.size() != y_true.size()) throw LengthMismatch("salinity and y_true differ in length");
  if (edges.size() < 2) throw ConfigError("salinity bins need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ConfigError("salinity bin edges must be strictly increasing");
  MetricReport rep;
  rep.r2 = r2(y_true, y_pred);
  rep.rmse = rmse(y_true, y_pred);
  rep.n = y_true.size();
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const bool last = b + 2 == edges.size();
    std::vector<double> t, p;
    for (std::size_t i = 0; i < salinity.size(); ++i) {
      const double s = salinity[i];
      if (s >= edges[b] && (s < edges[b + 1] || (last && s <= edges[b + 1]))) {
        t.push_back(y_true[i]);
        p.push_back(y_pred[i]);
      }
    }
    SalinityBin bin{edges[b], edges[b + 1], t.size(), std::nullopt, std::nullopt};
    if (!t.empty()) bin.rmse = rmse(t, p);
    if (t.size() >= 2) {
      try {
        bin.r2 = r2(t, p);
      } catch (const ConstantTruth&) {
      }
    }
    rep.bins.push_back(bin);
  }
  return rep;
}

inline nlohmann::ordered_json metric_report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["reference"] = r.reference;
  j["n"] = r.n;
  j["r2"] = r.r2;
  j["rmse_mg_per_l"] = r.rmse;
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : r.bins) {
    nlohmann::ordered_json o;
    o["salinity_lo_psu"] = b.lo;
    o["salinity_hi_psu"] = b.hi;
    o["n"] = b.n;
    o["r2"] = b.r2 ? nlohmann::ordered_json(*b.r2) : nlohmann::ordered_json(nullptr);
    o["rmse_mg_per_l"] = b.rmse ? nlohmann::ordered_json(*b.rmse) : nlohmann::ordered_json(nullptr);
    bins.push_back(o);
  }
  j["salinity_bins"] = bins;
  if (!r.warning.empty()) j["warning"] = r.warning;
  return j;
}

struct ScatterRow {
  double nitrate_true = 0.0;
  double nitrate_pred = 0.0;
  double salinity_psu = 0.0;
};

inline std::string scatter_to_csv(std::span<const double> y_true, std::span<const double> y_pred,
                                  std::span<const double> salinity) {
  if (y_true.size() != y_pred.size() || y_true.size() != salinity.size())
    throw LengthMismatch("scatter export needs aligned truth, prediction and salinity");
  std::string out = "nitrate_true,nitrate_pred,salinity_psu\n";
  for (std::size_t i = 0; i < y_true.size(); ++i)
    out += format_sig15(y_true[i]) + "," + format_sig15(y_pred[i]) + "," + format_sig15(salinity[i]) + "\n";
  return out;
}

inline std::vector<ScatterRow> parse_scatter_csv(std::string_view text) {
  const auto table = parse_csv(text, {"nitrate_true", "nitrate_pred", "salinity_psu"});
  std::vector<ScatterRow> rows;
  for (const auto& [line, fields] : table.rows) {
    ScatterRow row;
    double* dst[3] = {&row.nitrate_true, &row.nitrate_pred, &row.salinity_psu};
    for (std::size_t c = 0; c < 3; ++c) {
      const auto v = parse_double(fields[c]);
      if (!v) throw SchemaError(line, "non-numeric value in column " + std::to_string(c + 1));
      *dst[c] = *v;
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Periodogram

struct PeriodogramOptions {
  double min_period_h = 2.0;
  double max_period_h = 400.0;
  std::size_t count = 20000;       // log-spaced trial periods
  double significance = 0.01;      // false-alarm level used for peak reporting
};

struct PeriodogramResult {
  std::vector<double> periods_h;   // ascending
  std::vector<double> power;       // in [0, 1]
  std::vector<double> fap;         // false-alarm probability of each row's power
  double dominant_period_h = 0.0;
  double dominant_power = 0.0;
  double dominant_fap = 1.0;
  double significance = 0.01;
  std::size_t n = 0;
  double effective_frequencies = 0.0;
};

/// False-alarm probability of normalized power `p` for `n` points and `m`
/// independent frequencies: 1 - (1 - (1 - p)^((n - 3) / 2))^m.
inline double false_alarm_probability(double p, std::size_t n, double m) {
  if (p <= 0) return 1.0;
  if (p >= 1) return 0.0;
  const double single = std::exp(0.5 * (static_cast<double>(n) - 3.0) * std::log1p(-p));
  if (single >= 1.0) return 1.0;
  // 1 - (1 - s)^m, stable for small s.
  return -std::expm1(m * std::log1p(-single));
}

/// Least-squares fit of y = a cos(wt) + b sin(wt) + c at each trial period;
/// power is the fraction of variance about the mean explained by the
/// sinusoid. Works on irregular sampling.
inline PeriodogramResult periodogram(std::span<const double> t_hours, std::span<const double> values,
                                     const PeriodogramOptions& opt = {}) {
  if (t_hours.size() != values.size()) throw LengthMismatch("periodogram times and values differ in length");
  const std::size_t n = t_hours.size();
  if (n < 50) throw TooFewPoints("periodogram needs at least 50 points, got " + std::to_string(n));
  if (!(opt.min_period_h > 0 && opt.max_period_h > opt.min_period_h) || opt.count < 2)
    throw ConfigError("periodogram period range must satisfy 0 < min < max with count >= 2");

  double t0 = t_hours[0], t1 = t_hours[0], mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t0 = std::min(t0, t_hours[i]);
    t1 = std::max(t1, t_hours[i]);
    mean += values[i];
  }
  mean /= static_cast<double>(n);
  std::vector<double> t(n), y(n);
  double chi0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = t_hours[i] - t0;
    y[i] = values[i] - mean;
    chi0 += y[i] * y[i];
  }
  const double span = t1 - t0;

  PeriodogramResult res;
  res.n = n;
  res.significance = opt.significance;
  res.periods_h.resize(opt.count);
  res.power.assign(opt.count, 0.0);
  res.fap.assign(opt.count, 1.0);
  // Independent frequencies across the scanned band (at least one).
  res.effective_frequencies = std::max(1.0, span * (1.0 / opt.min_period_h - 1.0 / opt.max_period_h));

  const double lmin = std::log(opt.min_period_h), lmax = std::log(opt.max_period_h);
  const double var_scale = chi0 > 0 ? chi0 : 0.0;
  const double tiny = 1e-12 * std::max(1.0, var_scale);
  for (std::size_t k = 0; k < opt.count; ++k) {
    const double period = std::exp(lmin + (lmax - lmin) * static_cast<double>(k) / static_cast<double>(opt.count - 1));
    res.periods_h[k] = period;
    if (!(chi0 > tiny)) continue;
    const double w = 2.0 * std::numbers::pi / period;
    double sc = 0, ss = 0, scc = 0, sss = 0, ssc = 0, syc = 0, sys = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::cos(w * t[i]), s = std::sin(w * t[i]);
      sc += c;
      ss += s;
      scc += c * c;
      sss += s * s;
      ssc += s * c;
      syc += y[i] * c;
      sys += y[i] * s;
    }
    // Regress the centred y on the centred cos/sin pair (constant absorbed).
    const double dn = static_cast<double>(n);
    const double cc = scc - sc * sc / dn, ss2 = sss - ss * ss / dn, cs = ssc - sc * ss / dn;
    const double det = cc * ss2 - cs * cs;
    if (!(det > 1e-12 * dn * dn)) continue;
    const double a = (syc * ss2 - sys * cs) / det;
    const double b = (sys * cc - syc * cs) / det;
    const double explained = a * syc + b * sys;
    res.power[k] = std::clamp(explained / chi0, 0.0, 1.0);
    res.fap[k] = false_alarm_probability(res.power[k], n, res.effective_frequencies);
  }
  const auto best = static_cast<std::size_t>(std::max_element(res.power.begin(), res.power.end()) - res.power.begin());
  res.dominant_period_h = res.periods_h[best];
  res.dominant_power = res.power[best];
  res.dominant_fap = res.fap[best];
  return res;
}

struct PeriodogramPeak {
  double period_h = 0.0;
  double power = 0.0;
  double fap = 1.0;
};

/// Local maxima of the power whose false-alarm probability is below
/// `max_fap`, ordered by decreasing power.
inline std::vector<PeriodogramPeak> significant_peaks(const PeriodogramResult& r, double max_fap) {
  std::vector<PeriodogramPeak> peaks;
  for (std::size_t k = 1; k + 1 < r.power.size(); ++k)
    if (r.power[k] > r.power[k - 1] && r.power[k] >= r.power[k + 1] && r.fap[k] < max_fap)
      peaks.push_back({r.periods_h[k], r.power[k], r.fap[k]});
  std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.power > b.power; });
  return peaks;
}

inline std::string periodogram_to_csv(const PeriodogramResult& r) {
  std::string out = "period_hours,power,significance\n";
  for (std::size_t k = 0; k < r.periods_h.size(); ++k)
    out += format_sig15(r.periods_h[k]) + "," + format_sig15(r.power[k]) + "," + format_sig15(r.fap[k]) + "\n";
  return out;
}

/// Time series for the periodogram.
struct Series {
  std::vector<UtcTime> timestamps;
  std::vector<double> values;

  std::vector<double> hours() const {
    std::vector<double> h(timestamps.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(timestamps[i] - timestamps.front()) / 3600.0;
    return h;
  }
};

/// Reads a CSV whose first column is `timestamp_iso8601`; `column` names the
/// value column (empty: the second column). Rows are sorted by time.
inline Series parse_series_csv(std::string_view text, const std::string& column = "") {
  Series s;
  std::size_t col = 1;
  bool have_header = false;
  std::size_t width = 0;
  std::vector<std::pair<UtcTime, double>> rows;
  for_each_data_line(text, [&](std::size_t row, std::string_view line) {
    const auto fields = split(line, ',');
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "timestamp_iso8601")
        throw SchemaError(row, "expected header starting with 'timestamp_iso8601' and at least one value column");
      if (!column.empty()) {
        const auto it = std::find(fields.begin(), fields.end(), std::string_view(column));
        if (it == fields.end() || it == fields.begin()) throw SchemaError(row, "no column named '" + column + "'");
        col = static_cast<std::size_t>(it - fields.begin());
      }
      width = fields.size();
      have_header = true;
      return;
    }
    if (fields.size() != width)
      throw SchemaError(row, "expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    const auto t = parse_iso8601(fields[0]);
    if (!t) throw SchemaError(row, "bad timestamp '" + std::string(fields[0]) + "'");
    const auto v = parse_double(fields[col]);
    if (!v || !std::isfinite(*v)) throw SchemaError(row, "non-numeric value '" + std::string(fields[col]) + "'");
    rows.emplace_back(*t, *v);
  });
  if (!have_header) throw SchemaError(1, "missing header");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [t, v] : rows) {
    s.timestamps.push_back(t);
    s.values.push_back(v);
  }
  return s;
}

}  // namespace wqdiff
