#pragma once

// Scan file formats: long CSV (timestamp,sensor_channel,wavelength_nm,value)
// and JSON-lines with one scan per line. See docs/formats.md.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqdiff/error.hpp"
#include "wqdiff/grid.hpp"
#include "wqdiff/spectral.hpp"
#include "wqdiff/text.hpp"
#include "wqdiff/time.hpp"

namespace wqdiff {

/// Channels of one scan before sensor selection and grid trimming.
struct RawScan {
  UtcTime timestamp;
  ViewGeometry geometry;
  std::map<std::string, RawSpectrum> channels;
};

namespace detail {

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

inline std::vector<double> channel_mean(const std::vector<const std::vector<double>*>& parts) {
  std::vector<double> out(parts.front()->size(), 0.0);
  for (const auto* p : parts)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*p)[i];
  for (double& v : out) v /= static_cast<double>(parts.size());
  return out;
}

}  // namespace detail

/// Trims every channel to `grid` and resolves the radiance sensors: the nadir
/// water-leaving sensor if present, else the mean of the tilted ones; skylight
/// sensors `lsky_*` are averaged when there is no plain `lsky`.
inline RadiometricScan assemble_scan(const RawScan& raw, const WavelengthGrid& grid = default_grid()) {
  const std::string when = format_iso8601(raw.timestamp);
  std::map<std::string, std::vector<double>> trimmed;
  for (const auto& [name, spectrum] : raw.channels) {
    try {
      trimmed[name] = trim_to_grid(spectrum, grid).values;
    } catch (const InsufficientCoverage& e) {
      throw InsufficientCoverage("scan " + when + " channel " + name + ": " + e.what());
    }
  }

  RadiometricScan scan;
  scan.timestamp = raw.timestamp;
  scan.geometry = raw.geometry;

  const auto ed = trimmed.find("ed");
  if (ed == trimmed.end()) throw GridMismatch("scan " + when + " has no ed channel");
  scan.ed = ed->second;

  if (auto it = trimmed.find("lsky"); it != trimmed.end()) {
    scan.lsky = it->second;
  } else {
    std::vector<const std::vector<double>*> sky;
    for (const auto& [name, v] : trimmed)
      if (detail::starts_with(name, "lsky_")) sky.push_back(&v);
    if (sky.empty()) throw GridMismatch("scan " + when + " has no skylight channel");
    scan.lsky = detail::channel_mean(sky);
  }

  if (auto it = trimmed.find("lw_nadir"); it != trimmed.end()) {
    scan.lw = it->second;
    scan.lw_source = "lw_nadir";
  } else {
    std::vector<const std::vector<double>*> tilted;
    std::string names;
    for (const auto& [name, v] : trimmed)
      if (detail::starts_with(name, "lw_")) {
        tilted.push_back(&v);
        names += (names.empty() ? "" : "+") + name;
      }
    if (tilted.empty()) throw GridMismatch("scan " + when + " has no water-leaving radiance channel");
    scan.lw = detail::channel_mean(tilted);
    scan.lw_source = tilted.size() == 1 ? names : "mean(" + names + ")";
  }
  return scan;
}

// ---------------------------------------------------------------- JSON lines

inline std::string scan_to_json_line(const RawScan& scan) {
  std::string out;
  out.reserve(32 * 1024);
  out += "{\"timestamp\":\"" + format_iso8601(scan.timestamp) + "\"";
  out += ",\"sza_deg\":" + format_double(scan.geometry.solar_zenith_deg);
  out += ",\"vza_deg\":" + format_double(scan.geometry.view_zenith_deg);
  out += ",\"raa_deg\":" + format_double(scan.geometry.relative_azimuth_deg);
  // All channels of a scan share one wavelength vector.
  const auto& wl = scan.channels.begin()->second.wavelength_nm;
  bool uniform = wl.size() >= 2;
  for (std::size_t i = 2; uniform && i < wl.size(); ++i)
    uniform = std::abs((wl[i] - wl[i - 1]) - (wl[1] - wl[0])) < 1e-9;
  if (uniform) {
    out += ",\"wavelength_nm\":{\"start\":" + format_double(wl.front()) +
           ",\"step\":" + format_double(wl[1] - wl[0]) + ",\"count\":" + std::to_string(wl.size()) + "}";
  } else {
    out += ",\"wavelength_nm\":[";
    for (std::size_t i = 0; i < wl.size(); ++i) out += (i ? "," : "") + format_double(wl[i]);
    out += "]";
  }
  out += ",\"channels\":{";
  bool first = true;
  for (const auto& [name, spectrum] : scan.channels) {
    if (spectrum.wavelength_nm != wl) throw GridMismatch("channels of one scan must share wavelengths");
    out += (first ? "\"" : ",\"") + name + "\":[";
    first = false;
    for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
      if (i) out += ',';
      out += format_double(spectrum.values[i]);
    }
    out += "]";
  }
  out += "}}";
  return out;
}

inline RawScan scan_from_json(const nlohmann::json& j, std::size_t row) {
  try {
    RawScan scan;
    const auto t = parse_iso8601(j.at("timestamp").get<std::string>());
    if (!t) throw SchemaError(row, "bad timestamp");
    scan.timestamp = *t;
    scan.geometry = {j.at("sza_deg").get<double>(), j.at("vza_deg").get<double>(), j.at("raa_deg").get<double>()};
    if (!geometry_in_domain(scan.geometry)) throw SchemaError(row, "angles out of range");
    std::vector<double> wl;
    const auto& w = j.at("wavelength_nm");
    if (w.is_object()) {
      const double start = w.at("start").get<double>(), step = w.at("step").get<double>();
      const auto count = w.at("count").get<std::size_t>();
      wl.resize(count);
      for (std::size_t i = 0; i < count; ++i) wl[i] = start + step * static_cast<double>(i);
    } else {
      wl = w.get<std::vector<double>>();
    }
    for (const auto& [name, values] : j.at("channels").items()) {
      RawSpectrum s{wl, values.get<std::vector<double>>()};
      if (s.values.size() != wl.size()) throw SchemaError(row, "channel " + name + " length mismatch");
      scan.channels.emplace(name, std::move(s));
    }
    if (scan.channels.empty()) throw SchemaError(row, "scan has no channels");
    return scan;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(row, e.what());
  }
}

inline std::vector<RawScan> parse_scans_jsonl(std::string_view text) {
  std::vector<RawScan> scans;
  for_each_data_line(text, [&](std::size_t row, std::string_view line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(row, e.what());
    }
    scans.push_back(scan_from_json(j, row));
  });
  return scans;
}

// ------------------------------------------------------------------ long CSV

inline const std::vector<std::string>& scan_csv_header() {
  static const std::vector<std::string> h{"timestamp", "sensor_channel", "wavelength_nm", "value"};
  return h;
}

inline std::string scans_to_csv(const std::vector<RawScan>& scans) {
  std::string out = "timestamp,sensor_channel,wavelength_nm,value\n";
  for (const auto& s : scans) {
    const auto ts = format_iso8601(s.timestamp);
    out += ts + ",sza_deg,," + format_double(s.geometry.solar_zenith_deg) + "\n";
    out += ts + ",vza_deg,," + format_double(s.geometry.view_zenith_deg) + "\n";
    out += ts + ",raa_deg,," + format_double(s.geometry.relative_azimuth_deg) + "\n";
    for (const auto& [name, spectrum] : s.channels)
      for (std::size_t i = 0; i < spectrum.values.size(); ++i)
        out += ts + "," + name + "," + format_double(spectrum.wavelength_nm[i]) + "," +
               format_double(spectrum.values[i]) + "\n";
  }
  return out;
}

/// Rows may arrive in any order; they are grouped by timestamp and channel,
/// and each channel is sorted by wavelength.
inline std::vector<RawScan> parse_scans_csv(std::string_view text) {
  const auto table = parse_csv(text, scan_csv_header());
  struct Partial {
    std::map<std::string, std::vector<std::pair<double, double>>> channels;
    std::optional<double> sza, vza, raa;
  };
  std::map<UtcTime, Partial> by_time;
  for (const auto& [row, f] : table.rows) {
    const auto t = parse_iso8601(f[0]);
    if (!t) throw SchemaError(row, "bad timestamp '" + std::string(f[0]) + "'");
    const auto value = parse_double(f[3]);
    if (!value) throw SchemaError(row, "bad value '" + std::string(f[3]) + "'");
    auto& p = by_time[*t];
    const std::string channel(f[1]);
    if (channel == "sza_deg") p.sza = *value;
    else if (channel == "vza_deg") p.vza = *value;
    else if (channel == "raa_deg") p.raa = *value;
    else {
      const auto wl = parse_double(f[2]);
      if (!wl) throw SchemaError(row, "bad wavelength '" + std::string(f[2]) + "'");
      p.channels[channel].emplace_back(*wl, *value);
    }
  }
  std::vector<RawScan> scans;
  for (auto& [t, p] : by_time) {
    RawScan s;
    s.timestamp = t;
    if (!p.sza || !p.vza || !p.raa)
      throw SchemaError(0, "scan " + format_iso8601(t) + " lacks sza_deg/vza_deg/raa_deg rows");
    s.geometry = {*p.sza, *p.vza, *p.raa};
    if (!geometry_in_domain(s.geometry)) throw SchemaError(0, "scan " + format_iso8601(t) + " angles out of range");
    for (auto& [name, samples] : p.channels) {
      std::sort(samples.begin(), samples.end());
      RawSpectrum r;
      for (const auto& [wl, v] : samples) {
        if (!r.wavelength_nm.empty() && r.wavelength_nm.back() == wl)
          throw SchemaError(0, "scan " + format_iso8601(t) + " channel " + name + " repeats a wavelength");
        r.wavelength_nm.push_back(wl);
        r.values.push_back(v);
      }
      s.channels.emplace(name, std::move(r));
    }
    scans.push_back(std::move(s));
  }
  return scans;
}

/// Reads a scan file, choosing the format from the extension (.csv or .jsonl).
inline std::vector<RawScan> load_scans(const std::string& path) {
  const auto text = read_file(path);
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return parse_scans_csv(text);
  return parse_scans_jsonl(text);
}

// ------------------------------------------------------------------ BRDF LUT

/// CSV with columns sza_deg,vza_deg,raa_deg,wavelength_nm,factor covering a
/// complete rectilinear grid.
inline BrdfLut parse_brdf_lut(std::string_view text, ViewGeometry reference = {}) {
  const auto table = parse_csv(text, {"sza_deg", "vza_deg", "raa_deg", "wavelength_nm", "factor"});
  std::map<std::array<double, 4>, double> cells;
  std::set<double> sza, vza, raa, wl;
  for (const auto& [row, f] : table.rows) {
    std::array<double, 5> v{};
    for (std::size_t c = 0; c < 5; ++c) {
      const auto x = parse_double(f[c]);
      if (!x) throw SchemaError(row, "not a number: '" + std::string(f[c]) + "'");
      v[c] = *x;
    }
    if (!(v[4] > 0.5 && v[4] < 2.0)) throw SchemaError(row, "factor outside (0.5, 2.0)");
    if (!cells.emplace(std::array<double, 4>{v[0], v[1], v[2], v[3]}, v[4]).second)
      throw SchemaError(row, "duplicate LUT cell");
    sza.insert(v[0]);
    vza.insert(v[1]);
    raa.insert(v[2]);
    wl.insert(v[3]);
  }
  std::vector<double> factors;
  factors.reserve(sza.size() * vza.size() * raa.size() * wl.size());
  for (double a : sza)
    for (double b : vza)
      for (double c : raa)
        for (double w : wl) {
          const auto it = cells.find({a, b, c, w});
          if (it == cells.end()) throw ConfigError("BRDF LUT is not a complete grid");
          factors.push_back(it->second);
        }
  return BrdfLut({sza.begin(), sza.end()}, {vza.begin(), vza.end()}, {raa.begin(), raa.end()},
                 {wl.begin(), wl.end()}, std::move(factors), reference);
}

inline std::string brdf_lut_to_csv(const BrdfLut& lut) {
  std::string out = "sza_deg,vza_deg,raa_deg,wavelength_nm,factor\n";
  const auto &a = lut.sza_axis(), &b = lut.vza_axis(), &c = lut.raa_axis(), &w = lut.wavelength_axis();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      for (std::size_t k = 0; k < c.size(); ++k)
        for (std::size_t l = 0; l < w.size(); ++l)
          out += format_double(a[i]) + "," + format_double(b[j]) + "," + format_double(c[k]) + "," +
                 format_double(w[l]) + "," + format_double(lut.node(i, j, k, l)) + "\n";
  return out;
}

}  // namespace wqdiff
