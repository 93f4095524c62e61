#pragma once

// Time-series ingest: reading the sensor/lab CSVs, nitrate drift calibration,
// cross-stream pairing, and the train/test split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqdiff/error.hpp"
#include "wqdiff/rng.hpp"
#include "wqdiff/spectral.hpp"
#include "wqdiff/text.hpp"
#include "wqdiff/time.hpp"

namespace wqdiff {

struct NitrateReading {
  UtcTime timestamp;
  double concentration = 0.0;  // mg/L
  int flag = 0;                // sensor status; 0 is nominal

  friend bool operator==(const NitrateReading&, const NitrateReading&) = default;
};

struct SalinityReading {
  UtcTime timestamp;
  double salinity = 0.0;  // PSU

  friend bool operator==(const SalinityReading&, const SalinityReading&) = default;
};

struct LabSample {
  UtcTime timestamp;
  double nitrate = 0.0;  // mg/L

  friend bool operator==(const LabSample&, const LabSample&) = default;
};

struct MatchedSample {
  UtcTime timestamp;      // nitrate time
  UtcTime rrs_timestamp;  // time of the paired spectrum
  std::vector<double> rrs;
  double salinity = 0.0;
  double nitrate = 0.0;
  std::optional<double> tss;
  std::optional<double> cdom;
};

// ------------------------------------------------------------------ loading

struct RowIssue {
  std::size_t row;
  std::string message;
};

/// Per-file bookkeeping from a load.
struct LoadReport {
  std::size_t rows = 0;
  std::size_t reordered = 0;             // rows that arrived out of time order
  std::size_t duplicates_collapsed = 0;  // identical repeated rows
  std::vector<RowIssue> issues;          // malformed rows skipped in lenient mode
};

struct LoadOptions {
  bool strict = true;  // throw on the first malformed row instead of collecting it
};

namespace detail {

inline UtcTime field_time(std::size_t row, std::string_view f) {
  const auto t = parse_iso8601(f);
  if (!t) throw SchemaError(row, "bad timestamp '" + std::string(f) + "'");
  return *t;
}

inline double field_number(std::size_t row, std::string_view f, const char* name) {
  const auto v = parse_double(f);
  if (!v || !std::isfinite(*v)) throw SchemaError(row, std::string(name) + ": not a number '" + std::string(f) + "'");
  return *v;
}

/// Sorts by timestamp, collapses identical duplicates, and rejects duplicate
/// timestamps that disagree.
template <class Record>
void sort_and_dedupe(std::vector<Record>& records, LoadReport& report, const char* stream) {
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].timestamp < records[i - 1].timestamp) ++report.reordered;
  std::stable_sort(records.begin(), records.end(),
                   [](const Record& a, const Record& b) { return a.timestamp < b.timestamp; });
  std::vector<Record> out;
  out.reserve(records.size());
  for (auto& r : records) {
    if (!out.empty() && out.back().timestamp == r.timestamp) {
      if (out.back() == r) {
        ++report.duplicates_collapsed;
        continue;
      }
      throw NonMonotonicTimestamps(std::string(stream) + ": conflicting values at " + format_iso8601(r.timestamp));
    }
    out.push_back(std::move(r));
  }
  records = std::move(out);
}

template <class Record, class RowFn>
std::vector<Record> load_rows(std::string_view text, const std::vector<std::string>& header, const char* stream,
                              const LoadOptions& opts, LoadReport& report, RowFn&& parse_row) {
  const auto table = parse_csv(text, header);
  std::vector<Record> records;
  records.reserve(table.rows.size());
  for (const auto& [row, fields] : table.rows) {
    try {
      records.push_back(parse_row(row, fields));
    } catch (const SchemaError& e) {
      if (opts.strict) throw;
      report.issues.push_back({row, e.what()});
    }
  }
  report.rows = records.size();
  sort_and_dedupe(records, report, stream);
  return records;
}

}  // namespace detail

inline std::vector<NitrateReading> parse_nitrate_csv(std::string_view text, LoadReport& report,
                                                     const LoadOptions& opts = {}) {
  return detail::load_rows<NitrateReading>(
      text, {"timestamp_iso8601", "nitrate_mg_per_l", "flag"}, "nitrate", opts, report,
      [](std::size_t row, const std::vector<std::string_view>& f) {
        NitrateReading r{detail::field_time(row, f[0]), detail::field_number(row, f[1], "nitrate_mg_per_l"), 0};
        if (r.concentration < 0) throw SchemaError(row, "negative nitrate concentration");
        const auto flag = parse_int(f[2]);
        if (!flag) throw SchemaError(row, "flag: not an integer '" + std::string(f[2]) + "'");
        r.flag = static_cast<int>(*flag);
        return r;
      });
}

inline std::vector<SalinityReading> parse_salinity_csv(std::string_view text, LoadReport& report,
                                                       const LoadOptions& opts = {}) {
  return detail::load_rows<SalinityReading>(
      text, {"timestamp_iso8601", "salinity_psu"}, "salinity", opts, report,
      [](std::size_t row, const std::vector<std::string_view>& f) {
        SalinityReading r{detail::field_time(row, f[0]), detail::field_number(row, f[1], "salinity_psu")};
        if (r.salinity < 0 || r.salinity > 42) throw SchemaError(row, "salinity outside [0, 42] PSU");
        return r;
      });
}

inline std::vector<LabSample> parse_lab_csv(std::string_view text, LoadReport& report, const LoadOptions& opts = {}) {
  return detail::load_rows<LabSample>(
      text, {"timestamp_iso8601", "nitrate_mg_per_l"}, "lab", opts, report,
      [](std::size_t row, const std::vector<std::string_view>& f) {
        LabSample r{detail::field_time(row, f[0]), detail::field_number(row, f[1], "nitrate_mg_per_l")};
        if (r.nitrate < 0) throw SchemaError(row, "negative lab nitrate");
        return r;
      });
}

inline std::string nitrate_to_csv(const std::vector<NitrateReading>& v) {
  std::string out = "timestamp_iso8601,nitrate_mg_per_l,flag\n";
  for (const auto& r : v)
    out += format_iso8601(r.timestamp) + "," + format_double(r.concentration) + "," + std::to_string(r.flag) + "\n";
  return out;
}

inline std::string salinity_to_csv(const std::vector<SalinityReading>& v) {
  std::string out = "timestamp_iso8601,salinity_psu\n";
  for (const auto& r : v) out += format_iso8601(r.timestamp) + "," + format_double(r.salinity) + "\n";
  return out;
}

inline std::string lab_to_csv(const std::vector<LabSample>& v) {
  std::string out = "timestamp_iso8601,nitrate_mg_per_l\n";
  for (const auto& r : v) out += format_iso8601(r.timestamp) + "," + format_double(r.nitrate) + "\n";
  return out;
}

// ------------------------------------------------------- drift calibration

struct CalibrationReport {
  double gain = 1.0;     // a in  c' = a c + b
  double offset = 0.0;   // b
  double residual_rmse = 0.0;
  std::vector<std::pair<double, double>> pairs;  // (sensor, lab)
};

struct CalibratedNitrate {
  std::vector<NitrateReading> readings;
  CalibrationReport report;
};

/// Fits lab = a * sensor + b by least squares over lab samples matched to the
/// nearest sensor reading within `window_s` (ties to the earlier reading), and
/// applies the correction to every reading.
inline CalibratedNitrate drift_calibrate(const std::vector<NitrateReading>& readings,
                                         const std::vector<LabSample>& labs, std::int64_t window_s = 30 * kMinute) {
  if (labs.size() < 2)
    throw InsufficientLabSamples("need at least 2 lab samples, got " + std::to_string(labs.size()));

  CalibrationReport rep;
  for (const auto& lab : labs) {
    auto it = std::lower_bound(readings.begin(), readings.end(), lab.timestamp,
                               [](const NitrateReading& r, UtcTime t) { return r.timestamp < t; });
    const NitrateReading* best = nullptr;
    if (it != readings.begin()) best = &*std::prev(it);
    if (it != readings.end() && (!best || abs_diff(it->timestamp, lab.timestamp) < abs_diff(best->timestamp, lab.timestamp)))
      best = &*it;
    if (!best || abs_diff(best->timestamp, lab.timestamp) > window_s)
      throw UnmatchableLabSample("no sensor reading within " + std::to_string(window_s / kMinute) + " min of lab sample at " +
                                 format_iso8601(lab.timestamp));
    rep.pairs.emplace_back(best->concentration, lab.nitrate);
  }

  const double n = static_cast<double>(rep.pairs.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : rep.pairs) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : rep.pairs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 0))
    throw InsufficientLabSamples("sensor readings at the lab times are all equal; gain is unidentifiable");
  rep.gain = sxy / sxx;
  rep.offset = my - rep.gain * mx;
  double ss = 0;
  for (const auto& [x, y] : rep.pairs) {
    const double r = y - (rep.gain * x + rep.offset);
    ss += r * r;
  }
  rep.residual_rmse = std::sqrt(ss / n);

  CalibratedNitrate out{readings, rep};
  for (auto& r : out.readings) r.concentration = std::max(0.0, rep.gain * r.concentration + rep.offset);
  return out;
}

// ------------------------------------------------------------------ pairing

constexpr std::int64_t kDefaultPairingWindow = 5 * kMinute;

/// Pairs each nitrate reading with one accepted spectrum and one salinity
/// value, both within `window_s`. Spectra are assigned greedily in order of
/// ascending time distance, each at most once; equal distances go to the
/// earlier spectrum, then the earlier nitrate reading. Salinity readings may be
/// shared. Inputs must be time-sorted; unmatched readings are dropped.
inline std::vector<MatchedSample> pair_observations(const std::vector<ReflectanceSpectrum>& spectra,
                                                    const std::vector<NitrateReading>& nitrate,
                                                    const std::vector<SalinityReading>& salinity,
                                                    std::int64_t window_s = kDefaultPairingWindow) {
  struct Candidate {
    std::int64_t distance;
    std::size_t spectrum;
    std::size_t reading;
  };
  std::vector<Candidate> candidates;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < nitrate.size(); ++i) {
    const auto t = nitrate[i].timestamp;
    while (lo < spectra.size() && spectra[lo].timestamp < t - window_s) ++lo;
    for (std::size_t j = lo; j < spectra.size() && spectra[j].timestamp <= t + window_s; ++j)
      candidates.push_back({abs_diff(spectra[j].timestamp, t), j, i});
  }
  std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
    return std::tie(a.distance, spectra[a.spectrum].timestamp, a.reading) <
           std::tie(b.distance, spectra[b.spectrum].timestamp, b.reading);
  });

  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> spectrum_for(nitrate.size(), none);
  std::vector<bool> spectrum_used(spectra.size(), false);
  for (const auto& c : candidates) {
    if (spectrum_used[c.spectrum] || spectrum_for[c.reading] != none) continue;
    spectrum_used[c.spectrum] = true;
    spectrum_for[c.reading] = c.spectrum;
  }

  std::vector<MatchedSample> out;
  for (std::size_t i = 0; i < nitrate.size(); ++i) {
    if (spectrum_for[i] == none) continue;
    const auto t = nitrate[i].timestamp;
    auto it = std::lower_bound(salinity.begin(), salinity.end(), t,
                               [](const SalinityReading& s, UtcTime x) { return s.timestamp < x; });
    const SalinityReading* best = nullptr;
    if (it != salinity.begin()) best = &*std::prev(it);
    if (it != salinity.end() && (!best || abs_diff(it->timestamp, t) < abs_diff(best->timestamp, t))) best = &*it;
    if (!best || abs_diff(best->timestamp, t) > window_s) continue;
    const auto& spec = spectra[spectrum_for[i]];
    out.push_back({t, spec.timestamp, spec.rrs, best->salinity, nitrate[i].concentration, std::nullopt, std::nullopt});
  }
  return out;
}

// -------------------------------------------------------------------- split

struct SplitIndex {
  std::vector<std::size_t> train_ids;  // ascending
  std::vector<std::size_t> test_ids;   // ascending
  std::uint64_t seed = 0;
  double ratio = 0.7;
};

/// Uniform random permutation under `seed`; the first ceil(ratio * n) go to
/// training.
inline SplitIndex split_train_test(std::size_t n, double ratio, std::uint64_t seed) {
  if (n < 10) throw TooFewSamples("need at least 10 samples to split, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  // The epsilon keeps 0.7 * 10 at 7 rather than ceil(7.000000000000001).
  const auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  SplitIndex s;
  s.seed = seed;
  s.ratio = ratio;
  s.train_ids.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_ids.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

inline nlohmann::json split_to_json(const SplitIndex& s) {
  return {{"seed", s.seed}, {"ratio", s.ratio}, {"train_ids", s.train_ids}, {"test_ids", s.test_ids}};
}

inline SplitIndex split_from_json(const nlohmann::json& j) {
  try {
    SplitIndex s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratio = j.at("ratio").get<double>();
    s.train_ids = j.at("train_ids").get<std::vector<std::size_t>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::size_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("split file: ") + e.what());
  }
}

// ---------------------------------------------------- matched-sample JSONL

inline std::string matched_to_json_line(const MatchedSample& m) {
  std::string out = "{\"timestamp\":\"" + format_iso8601(m.timestamp) + "\",\"rrs_timestamp\":\"" +
                    format_iso8601(m.rrs_timestamp) + "\",\"salinity_psu\":" + format_double(m.salinity) +
                    ",\"nitrate_mg_per_l\":" + format_double(m.nitrate);
  if (m.tss) out += ",\"tss_mg_per_l\":" + format_double(*m.tss);
  if (m.cdom) out += ",\"cdom440_per_m\":" + format_double(*m.cdom);
  out += ",\"rrs\":[";
  for (std::size_t i = 0; i < m.rrs.size(); ++i) {
    if (i) out += ',';
    out += format_double(m.rrs[i]);
  }
  out += "]}";
  return out;
}

inline std::string matched_to_jsonl(const std::vector<MatchedSample>& samples) {
  std::string out;
  for (const auto& m : samples) out += matched_to_json_line(m) + "\n";
  return out;
}

inline std::vector<MatchedSample> parse_matched_jsonl(std::string_view text, std::size_t bands = default_grid().count()) {
  std::vector<MatchedSample> out;
  for_each_data_line(text, [&](std::size_t row, std::string_view line) {
    try {
      const auto j = nlohmann::json::parse(line);
      MatchedSample m;
      m.timestamp = detail::field_time(row, j.at("timestamp").get<std::string>());
      m.rrs_timestamp = detail::field_time(row, j.at("rrs_timestamp").get<std::string>());
      m.salinity = j.at("salinity_psu").get<double>();
      m.nitrate = j.at("nitrate_mg_per_l").get<double>();
      if (j.contains("tss_mg_per_l")) m.tss = j["tss_mg_per_l"].get<double>();
      if (j.contains("cdom440_per_m")) m.cdom = j["cdom440_per_m"].get<double>();
      m.rrs = j.at("rrs").get<std::vector<double>>();
      if (m.rrs.size() != bands)
        throw SchemaError(row, "rrs has " + std::to_string(m.rrs.size()) + " bands, expected " + std::to_string(bands));
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(row, e.what());
    }
  });
  return out;
}

}  // namespace wqdiff
