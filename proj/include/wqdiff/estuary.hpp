#pragma once

// Synthetic estuary: tidally forced two-end-member mixing, a semi-analytical
// bio-optical forward model, and campaign generation in the ingest formats.
// All parameter defaults are synthetic, not field values.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "wqdiff/error.hpp"
#include "wqdiff/grid.hpp"
#include "wqdiff/ingest.hpp"
#include "wqdiff/kvconfig.hpp"
#include "wqdiff/rng.hpp"
#include "wqdiff/scan_io.hpp"
#include "wqdiff/spectral.hpp"
#include "wqdiff/time.hpp"

namespace wqdiff {

struct TidalConstituent {
  std::string name;
  double period_h = 12.4206012;
  double amplitude_m = 1.0;
  double phase_rad = 0.0;
};

inline TidalConstituent m2(double amplitude_m = 1.5, double phase_rad = 0.0) {
  return {"M2", 12.4206012, amplitude_m, phase_rad};
}

inline TidalConstituent s2(double amplitude_m = 0.5, double phase_rad = 0.0) {
  return {"S2", 12.0, amplitude_m, phase_rad};
}

/// eta(t) = sum_k A_k cos(2 pi t / T_k + phi_k), t in hours from the campaign start.
inline double tidal_elevation(double t_hours, const std::vector<TidalConstituent>& constituents) {
  double eta = 0.0;
  for (const auto& c : constituents)
    eta += c.amplitude_m * std::cos(2.0 * std::numbers::pi * t_hours / c.period_h + c.phase_rad);
  return eta;
}

struct MixingParams {
  double f0 = 0.5;    // mean seawater fraction
  double beta = 0.45; // tidal modulation depth
};

/// Seawater fraction f = clamp(f0 + beta * eta / eta_max, 0, 1), with
/// eta_max the sum of constituent amplitudes.
inline double mixing_fraction(double t_hours, const std::vector<TidalConstituent>& constituents,
                              const MixingParams& mix) {
  double eta_max = 0.0;
  for (const auto& c : constituents) eta_max += c.amplitude_m;
  const double eta = eta_max > 0 ? tidal_elevation(t_hours, constituents) / eta_max : 0.0;
  return std::clamp(mix.f0 + mix.beta * eta, 0.0, 1.0);
}

struct WaterState {
  double salinity = 0.0;  // PSU
  double nitrate = 0.0;   // mg/L
  double tss = 0.0;       // mg/L
  double cdom440 = 0.0;   // m^-1
  double chl = 0.0;       // ug/L
};

using EndMemberWaterMass = WaterState;

inline EndMemberWaterMass default_river() { return {0.5, 0.20, 40.0, 1.5, 4.0}; }
inline EndMemberWaterMass default_sea() { return {35.0, 0.02, 3.0, 0.05, 0.5}; }

/// Optional non-conservative nitrate loss; zero rate disables it.
struct NitrateDecay {
  double rate_per_day = 0.0;
  double residence_days = 2.0;
};

/// Conservative mixing X = f X_sea + (1 - f) X_river. With a decay rate the
/// riverine nitrate share is attenuated by exp(-rate * residence * f).
inline WaterState mix_end_members(double f, const EndMemberWaterMass& river, const EndMemberWaterMass& sea,
                                  const NitrateDecay& decay = {}) {
  auto lerp = [f](double r, double s) { return f * s + (1.0 - f) * r; };
  WaterState w{lerp(river.salinity, sea.salinity), lerp(river.nitrate, sea.nitrate), lerp(river.tss, sea.tss),
               lerp(river.cdom440, sea.cdom440), lerp(river.chl, sea.chl)};
  if (decay.rate_per_day > 0)
    w.nitrate = f * sea.nitrate + (1.0 - f) * river.nitrate * std::exp(-decay.rate_per_day * decay.residence_days * f);
  return w;
}

/// Relative (lognormal, mean-one) variability of each state variable.
struct StateNoise {
  double salinity = 0.02;
  double nitrate = 0.08;
  double tss = 0.15;
  double cdom440 = 0.10;
  double chl = 0.20;
};

/// Applies multiplicative lognormal noise exp(s z - s^2 / 2) given standard
/// normal draws `z` in the order salinity, nitrate, tss, cdom440, chl.
inline WaterState apply_state_noise(WaterState w, const StateNoise& noise, const std::array<double, 5>& z) {
  auto mult = [](double s, double zi) { return std::exp(s * zi - 0.5 * s * s); };
  w.salinity = std::clamp(w.salinity * mult(noise.salinity, z[0]), 0.0, 42.0);
  w.nitrate *= mult(noise.nitrate, z[1]);
  w.tss *= mult(noise.tss, z[2]);
  w.cdom440 *= mult(noise.cdom440, z[3]);
  w.chl *= mult(noise.chl, z[4]);
  return w;
}

// -------------------------------------------------------- bio-optical model

/// Coefficients of the forward model. Tables are on a 10 nm grid starting at
/// 400 nm and are linearly interpolated to the working grid.
struct BioOpticalCoefficients {
  double g1 = 0.0949;
  double g2 = 0.0794;
  double cdom_slope = 0.014;       // S_g, nm^-1
  double tss_bb_specific = 0.01;   // b*_b,tss at 550 nm, m^2 g^-1
  double tss_bb_exponent = 1.0;    // gamma
  double tss_a440 = 0.04;          // a*_tss(440), m^2 g^-1
  double tss_a_slope = 0.011;      // nm^-1
  double table_start_nm = 400.0;
  double table_step_nm = 10.0;
  // Pure-water absorption (m^-1).
  std::vector<double> water_absorption{
      0.00663, 0.00473, 0.00454, 0.00495, 0.00635, 0.00922, 0.00979, 0.0106, 0.0127, 0.0150, 0.0204, 0.0325,
      0.0409,  0.0434,  0.0474,  0.0565,  0.0619,  0.0695,  0.0896,  0.1351, 0.2224, 0.2644, 0.2755, 0.2916,
      0.3108,  0.340,   0.410,   0.439,   0.465,   0.516,   0.624,   0.827,  1.231,  1.798,  2.38,   2.47};
  // Pure-water backscatter (m^-1), 0.00144 (lambda / 500)^-4.32.
  std::vector<double> water_backscatter{
      0.00377584,  0.0033938,   0.00305827,  0.00276267,  0.00250148,  0.00227005,  0.00206442,  0.00188127,
      0.00171771,  0.00157132,  0.00144,     0.00132193,  0.00121557,  0.00111954,  0.00103269,  0.000953995,
      0.000882553, 0.000817586, 0.00075841,  0.000704421, 0.000655088, 0.000609941, 0.000568566, 0.000530593,
      0.000495696, 0.000463583, 0.000433993, 0.000406696, 0.000381482, 0.000358166, 0.000336581, 0.000316575,
      0.000298014, 0.000280775, 0.000264748, 0.000249832};
  // Chlorophyll-specific absorption (m^2 mg^-1).
  std::vector<double> chl_absorption{
      0.0252, 0.0294, 0.0334, 0.0363, 0.0374, 0.0363, 0.0334, 0.0294, 0.0252, 0.0211, 0.0177, 0.0151,
      0.0133, 0.0122, 0.0115, 0.0112, 0.0110, 0.0109, 0.0109, 0.0110, 0.0112, 0.0116, 0.0124, 0.0140,
      0.0167, 0.0204, 0.0239, 0.0254, 0.0227, 0.0168, 0.0118, 0.0086, 0.0067, 0.0057, 0.0052, 0.0050};
};

inline double interpolate_table(const std::vector<double>& table, double start_nm, double step_nm, double nm) {
  const double x = (nm - start_nm) / step_nm;
  if (x <= 0) return table.front();
  const auto i = static_cast<std::size_t>(x);
  if (i + 1 >= table.size()) return table.back();
  const double t = x - static_cast<double>(i);
  return table[i] * (1.0 - t) + table[i + 1] * t;
}

/// Inherent optical properties at one wavelength.
struct Iop {
  double absorption;
  double backscatter;
};

inline Iop inherent_optics(double nm, double tss, double cdom440, double chl, const BioOpticalCoefficients& c) {
  const double aw = interpolate_table(c.water_absorption, c.table_start_nm, c.table_step_nm, nm);
  const double bbw = interpolate_table(c.water_backscatter, c.table_start_nm, c.table_step_nm, nm);
  const double achl = interpolate_table(c.chl_absorption, c.table_start_nm, c.table_step_nm, nm);
  const double a = aw + cdom440 * std::exp(-c.cdom_slope * (nm - 440.0)) +
                   c.tss_a440 * std::exp(-c.tss_a_slope * (nm - 440.0)) * tss + achl * chl;
  const double bb = bbw + c.tss_bb_specific * tss * std::pow(nm / 550.0, -c.tss_bb_exponent);
  return {a, bb};
}

/// Rrs = g1 u + g2 u^2 with u = b_b / (a + b_b).
inline double rrs_from_u(double u, const BioOpticalCoefficients& c) { return c.g1 * u + c.g2 * u * u; }

inline std::vector<double> forward_rrs(double tss, double cdom440, double chl, const BioOpticalCoefficients& c = {},
                                       const WavelengthGrid& grid = default_grid()) {
  if (tss < 0 || cdom440 < 0 || chl < 0) throw ConfigError("forward_rrs: constituent concentrations must be >= 0");
  std::vector<double> out(grid.count());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const auto iop = inherent_optics(grid.wavelength(i), tss, cdom440, chl, c);
    out[i] = rrs_from_u(iop.backscatter / (iop.absorption + iop.backscatter), c);
  }
  return out;
}

// --------------------------------------------------------------- campaign

struct Cadences {
  int nitrate_min = 10;
  int salinity_min = 10;
  int scan_min = 15;
};

/// Poisson outages with exponentially distributed durations.
struct GapSchedule {
  double nitrate_rate_per_day = 0.0;
  double nitrate_mean_days = 0.0;
  double scan_rate_per_day = 0.0;
  double scan_mean_days = 0.0;
};

struct RadiometryModel {
  double rho = kDefaultSkylightFactor;
  double ed_peak = 1.6;       // W m^-2 nm^-1 at 550 nm, sun at zenith
  double sky_fraction = 0.12; // Lsky(550) as a fraction of Ed(550) / pi
  double view_zenith_deg = 40.0;
  double relative_azimuth_deg = 120.0;
  double latitude_deg = -23.5;
  double longitude_deg = 150.8;
};

struct EstuaryConfig {
  UtcTime start = make_utc(2023, 10, 31);
  double days = 188.0;
  std::uint64_t seed = 42;
  std::vector<TidalConstituent> constituents{m2(), s2()};
  MixingParams mixing;
  EndMemberWaterMass river = default_river();
  EndMemberWaterMass sea = default_sea();
  NitrateDecay decay;
  bool noise_enabled = true;
  StateNoise noise;
  double noise_correlation_h = 3.0;
  double rrs_noise = 0.005;             // relative, per band
  double sensor_nitrate_std = 0.003;    // mg/L
  double bad_scan_fraction = 0.02;
  double lab_std = 0.0;                 // mg/L
  double drift_gain = 1.04;             // sensor = gain * true + offset
  double drift_offset = 0.004;
  Cadences cadence;
  GapSchedule gaps{0.02, 2.0, 0.015, 2.0};
  int lab_count = 12;
  RadiometryModel radiometry;
  BioOpticalCoefficients optics;
  bool truth_rrs = false;               // attach Rrs to truth records at scan times
  std::string scan_format = "jsonl";    // or "csv"
  std::string brdf_lut_path;            // empty: identity table

  /// Throws ConfigError naming the offending field.
  void validate() const {
    if (!(days > 0)) throw ConfigError("days must be > 0");
    for (const auto& c : constituents) {
      if (!(c.period_h > 0)) throw ConfigError("tide." + c.name + ".period_h must be > 0");
      if (!(c.amplitude_m >= 0)) throw ConfigError("tide." + c.name + ".amplitude_m must be >= 0");
    }
    for (const auto* em : {&river, &sea})
      for (double v : {em->salinity, em->nitrate, em->tss, em->cdom440, em->chl})
        if (!(v >= 0)) throw ConfigError(std::string(em == &river ? "river" : "sea") + ": end-member values must be >= 0");
    if (!(river.salinity < sea.salinity)) throw ConfigError("river.salinity must be below sea.salinity");
    if (sea.salinity > 42) throw ConfigError("sea.salinity must be <= 42");
    if (cadence.nitrate_min <= 0) throw ConfigError("cadence.nitrate_min must be > 0");
    if (cadence.salinity_min <= 0) throw ConfigError("cadence.salinity_min must be > 0");
    if (cadence.scan_min <= 0) throw ConfigError("cadence.scan_min must be > 0");
    for (double v : {noise.salinity, noise.nitrate, noise.tss, noise.cdom440, noise.chl, rrs_noise, sensor_nitrate_std,
                     lab_std})
      if (!(v >= 0)) throw ConfigError("noise: standard deviations must be >= 0");
    if (!(noise_correlation_h > 0)) throw ConfigError("noise.correlation_h must be > 0");
    if (!(bad_scan_fraction >= 0 && bad_scan_fraction <= 1)) throw ConfigError("noise.bad_scan_fraction must lie in [0, 1]");
    if (!(drift_gain > 0)) throw ConfigError("drift.gain must be > 0");
    if (lab_count < 0) throw ConfigError("lab.count must be >= 0");
    if (!(radiometry.rho >= 0 && radiometry.rho <= 0.1)) throw ConfigError("radiometry.rho must lie in [0, 0.1]");
    if (!(radiometry.ed_peak > 0)) throw ConfigError("radiometry.ed_peak must be > 0");
    if (!(radiometry.sky_fraction >= 0)) throw ConfigError("radiometry.sky_fraction must be >= 0");
    if (!(mixing.beta >= 0)) throw ConfigError("mixing.beta must be >= 0");
    for (double v : {gaps.nitrate_rate_per_day, gaps.nitrate_mean_days, gaps.scan_rate_per_day, gaps.scan_mean_days})
      if (!(v >= 0)) throw ConfigError("gaps: rates and durations must be >= 0");
    if (scan_format != "jsonl" && scan_format != "csv") throw ConfigError("output.scan_format must be jsonl or csv");
    const auto bands = optics.water_absorption.size();
    if (bands < 2 || optics.water_backscatter.size() != bands || optics.chl_absorption.size() != bands)
      throw ConfigError("optics tables must have equal length >= 2");
  }

  /// All noise sources and outages switched off.
  EstuaryConfig noiseless() const {
    EstuaryConfig c = *this;
    c.noise_enabled = false;
    c.gaps = {};
    return c;
  }
};

inline EstuaryConfig estuary_config_from_kv(const KvConfig& kv) {
  EstuaryConfig c;
  if (kv.has("start")) {
    const auto t = parse_iso8601(kv.get_string("start", ""));
    if (!t) throw ConfigError("start: expected an ISO 8601 UTC timestamp");
    c.start = *t;
  }
  c.days = kv.get_double("days", c.days);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));

  std::vector<std::string> names;
  for (const auto& k : c.constituents) names.push_back(k.name);
  names = kv.get_strings("tide.constituents", names);
  std::vector<TidalConstituent> cons;
  for (const auto& name : names) {
    TidalConstituent t = name == "S2" ? s2() : m2();
    t.name = name;
    const std::string p = "tide." + name + ".";
    if (name != "M2" && name != "S2" && !kv.has(p + "period_h"))
      throw ConfigError(p + "period_h is required for constituent " + name);
    t.period_h = kv.get_double(p + "period_h", t.period_h);
    t.amplitude_m = kv.get_double(p + "amplitude_m", t.amplitude_m);
    t.phase_rad = kv.get_double(p + "phase_rad", t.phase_rad);
    cons.push_back(t);
  }
  c.constituents = cons;

  c.mixing.f0 = kv.get_double("mixing.f0", c.mixing.f0);
  c.mixing.beta = kv.get_double("mixing.beta", c.mixing.beta);
  for (auto [prefix, em] : {std::pair{"river.", &c.river}, std::pair{"sea.", &c.sea}}) {
    const std::string p = prefix;
    em->salinity = kv.get_double(p + "salinity", em->salinity);
    em->nitrate = kv.get_double(p + "nitrate", em->nitrate);
    em->tss = kv.get_double(p + "tss", em->tss);
    em->cdom440 = kv.get_double(p + "cdom440", em->cdom440);
    em->chl = kv.get_double(p + "chl", em->chl);
  }
  c.decay.rate_per_day = kv.get_double("nitrate.decay_per_day", c.decay.rate_per_day);
  c.decay.residence_days = kv.get_double("nitrate.residence_days", c.decay.residence_days);

  c.noise_enabled = kv.get_bool("noise.enabled", c.noise_enabled);
  c.noise.salinity = kv.get_double("noise.salinity", c.noise.salinity);
  c.noise.nitrate = kv.get_double("noise.nitrate", c.noise.nitrate);
  c.noise.tss = kv.get_double("noise.tss", c.noise.tss);
  c.noise.cdom440 = kv.get_double("noise.cdom440", c.noise.cdom440);
  c.noise.chl = kv.get_double("noise.chl", c.noise.chl);
  c.noise_correlation_h = kv.get_double("noise.correlation_h", c.noise_correlation_h);
  c.rrs_noise = kv.get_double("noise.rrs", c.rrs_noise);
  c.sensor_nitrate_std = kv.get_double("noise.sensor_nitrate_std", c.sensor_nitrate_std);
  c.bad_scan_fraction = kv.get_double("noise.bad_scan_fraction", c.bad_scan_fraction);
  c.lab_std = kv.get_double("noise.lab_std", c.lab_std);

  c.drift_gain = kv.get_double("drift.gain", c.drift_gain);
  c.drift_offset = kv.get_double("drift.offset", c.drift_offset);
  c.cadence.nitrate_min = static_cast<int>(kv.get_int("cadence.nitrate_min", c.cadence.nitrate_min));
  c.cadence.salinity_min = static_cast<int>(kv.get_int("cadence.salinity_min", c.cadence.salinity_min));
  c.cadence.scan_min = static_cast<int>(kv.get_int("cadence.scan_min", c.cadence.scan_min));
  c.gaps.nitrate_rate_per_day = kv.get_double("gaps.nitrate_rate_per_day", c.gaps.nitrate_rate_per_day);
  c.gaps.nitrate_mean_days = kv.get_double("gaps.nitrate_mean_days", c.gaps.nitrate_mean_days);
  c.gaps.scan_rate_per_day = kv.get_double("gaps.scan_rate_per_day", c.gaps.scan_rate_per_day);
  c.gaps.scan_mean_days = kv.get_double("gaps.scan_mean_days", c.gaps.scan_mean_days);
  c.lab_count = static_cast<int>(kv.get_int("lab.count", c.lab_count));

  auto& r = c.radiometry;
  r.rho = kv.get_double("radiometry.rho", r.rho);
  r.ed_peak = kv.get_double("radiometry.ed_peak", r.ed_peak);
  r.sky_fraction = kv.get_double("radiometry.sky_fraction", r.sky_fraction);
  r.view_zenith_deg = kv.get_double("radiometry.vza_deg", r.view_zenith_deg);
  r.relative_azimuth_deg = kv.get_double("radiometry.raa_deg", r.relative_azimuth_deg);
  r.latitude_deg = kv.get_double("radiometry.latitude_deg", r.latitude_deg);
  r.longitude_deg = kv.get_double("radiometry.longitude_deg", r.longitude_deg);
  c.brdf_lut_path = kv.get_string("radiometry.brdf_lut", c.brdf_lut_path);

  auto& o = c.optics;
  o.g1 = kv.get_double("optics.g1", o.g1);
  o.g2 = kv.get_double("optics.g2", o.g2);
  o.cdom_slope = kv.get_double("optics.cdom_slope", o.cdom_slope);
  o.tss_bb_specific = kv.get_double("optics.tss_bb_specific", o.tss_bb_specific);
  o.tss_bb_exponent = kv.get_double("optics.tss_bb_exponent", o.tss_bb_exponent);
  o.tss_a440 = kv.get_double("optics.tss_a440", o.tss_a440);
  o.tss_a_slope = kv.get_double("optics.tss_a_slope", o.tss_a_slope);
  o.table_start_nm = kv.get_double("optics.table_start_nm", o.table_start_nm);
  o.table_step_nm = kv.get_double("optics.table_step_nm", o.table_step_nm);
  o.water_absorption = kv.get_doubles("optics.water_absorption", o.water_absorption);
  o.water_backscatter = kv.get_doubles("optics.water_backscatter", o.water_backscatter);
  o.chl_absorption = kv.get_doubles("optics.chl_absorption", o.chl_absorption);

  c.truth_rrs = kv.get_bool("output.truth_rrs", c.truth_rrs);
  c.scan_format = kv.get_string("output.scan_format", c.scan_format);
  c.validate();
  return c;
}

/// Noise-free mixing state at `t_hours` after the campaign start.
inline WaterState water_state(double t_hours, const EstuaryConfig& cfg) {
  return mix_end_members(mixing_fraction(t_hours, cfg.constituents, cfg.mixing), cfg.river, cfg.sea, cfg.decay);
}

/// One record of the ground-truth stream, on the generator's base clock.
struct TruthRecord {
  UtcTime timestamp;
  double eta = 0.0;
  double fraction = 0.0;
  WaterState mixing;  // conservative-mixing values, no variability
  WaterState state;   // realized state including environmental variability
  std::vector<double> rrs;  // only at scan times when requested
};

struct Campaign {
  std::vector<NitrateReading> nitrate;
  std::vector<SalinityReading> salinity;
  std::vector<LabSample> labs;
  std::vector<RawScan> scans;
  std::vector<TruthRecord> truth;
};

/// Smooth clear-sky downwelling irradiance: a 5800 K blackbody shape
/// normalized at 550 nm, Rayleigh-attenuated, scaled by the sun elevation
/// (floored so night scans stay positive).
inline std::vector<double> daylight_ed(const WavelengthGrid& grid, double ed_peak, double cos_sza) {
  constexpr double c2 = 1.4388e7;  // nm K
  auto planck = [&](double nm) { return 1.0 / (std::pow(nm, 5) * (std::exp(c2 / (nm * 5800.0)) - 1.0)); };
  const double ref = planck(550.0);
  const double mu = std::max(cos_sza, 0.1);
  std::vector<double> ed(grid.count());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const double nm = grid.wavelength(i);
    const double tau = 0.1 * std::pow(nm / 550.0, -4.0);
    ed[i] = ed_peak * mu * planck(nm) / ref * std::exp(-tau / mu) / std::exp(-0.1);
  }
  return ed;
}

inline std::vector<double> sky_radiance(const std::vector<double>& ed, const WavelengthGrid& grid, double sky_fraction) {
  std::vector<double> l(ed.size());
  for (std::size_t i = 0; i < ed.size(); ++i)
    l[i] = sky_fraction * ed[i] / std::numbers::pi * std::pow(grid.wavelength(i) / 550.0, -2.0);
  return l;
}

/// Cosine of the true solar zenith angle (simple declination/hour-angle model).
inline double cos_solar_zenith(UtcTime t, double latitude_deg, double longitude_deg) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double day = std::floor(static_cast<double>(t.seconds) / kDay);
  double doy = std::fmod(day, 365.2425);  // days since 1 January, give or take leap drift
  if (doy < 0) doy += 365.2425;
  const double decl = 23.44 * deg * std::sin(2 * std::numbers::pi * (doy - 81.0) / 365.0);
  const double utc_hours = std::fmod(static_cast<double>(t.seconds), static_cast<double>(kDay)) / kHour;
  const double hour_angle = (utc_hours + longitude_deg / 15.0 - 12.0) * 15.0 * deg;
  const double lat = latitude_deg * deg;
  return std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
}

namespace detail {

/// Outage intervals [start, end) in seconds from the campaign start.
inline std::vector<std::pair<std::int64_t, std::int64_t>> outages(Rng& rng, double span_s, double rate_per_day,
                                                                  double mean_days) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  if (rate_per_day <= 0 || mean_days <= 0) return out;
  double t = 0;
  for (;;) {
    t += -std::log(1.0 - rng.uniform()) / rate_per_day * kDay;
    if (t >= span_s) break;
    const double len = -std::log(1.0 - rng.uniform()) * mean_days * kDay;
    out.emplace_back(static_cast<std::int64_t>(t), static_cast<std::int64_t>(t + len));
    t += len;
  }
  return out;
}

inline bool in_outage(std::int64_t t, const std::vector<std::pair<std::int64_t, std::int64_t>>& gaps) {
  for (const auto& [a, b] : gaps)
    if (t >= a && t < b) return true;
  return false;
}

}  // namespace detail

/// Simulates a campaign. The water state runs on a base clock whose step is
/// the gcd of the sensor cadences, so co-timed sensors see the same water.
/// Environmental variability is an Ornstein-Uhlenbeck process per variable in
/// log space. Scans are built by inverting compute_brf and brdf_normalize so
/// the spectral pipeline recovers the truth Rrs exactly when noise is off.
inline Campaign generate_campaign(const EstuaryConfig& cfg, const BrdfLut& lut = BrdfLut::identity(),
                                  const WavelengthGrid& grid = default_grid()) {
  cfg.validate();
  const std::int64_t step_min = std::gcd(std::gcd(cfg.cadence.nitrate_min, cfg.cadence.salinity_min), cfg.cadence.scan_min);
  const std::int64_t step_s = step_min * kMinute;
  const double span_s = cfg.days * kDay;
  const auto ticks = static_cast<std::int64_t>(std::floor(span_s / static_cast<double>(step_s) + 1e-9));

  Rng state_rng(derive_seed(cfg.seed, "estuary.state"));
  Rng sensor_rng(derive_seed(cfg.seed, "estuary.sensor"));
  Rng scan_rng(derive_seed(cfg.seed, "estuary.scan"));
  Rng gap_rng(derive_seed(cfg.seed, "estuary.gaps"));
  Rng lab_rng(derive_seed(cfg.seed, "estuary.lab"));

  const bool noisy = cfg.noise_enabled;
  const auto nitrate_gaps = detail::outages(gap_rng, span_s, cfg.gaps.nitrate_rate_per_day, cfg.gaps.nitrate_mean_days);
  const auto scan_gaps = detail::outages(gap_rng, span_s, cfg.gaps.scan_rate_per_day, cfg.gaps.scan_mean_days);

  const double phi = std::exp(-static_cast<double>(step_s) / (cfg.noise_correlation_h * kHour));
  const double innovation = std::sqrt(1.0 - phi * phi);
  std::array<double, 5> z{};
  if (noisy)
    for (double& v : z) v = state_rng.normal();

  const std::vector<double> wl = grid.wavelengths();
  Campaign out;
  out.truth.reserve(static_cast<std::size_t>(ticks));
  for (std::int64_t k = 0; k < ticks; ++k) {
    const std::int64_t rel = k * step_s;
    const UtcTime t = cfg.start + rel;
    const double hours = static_cast<double>(rel) / kHour;
    if (noisy && k > 0)
      for (double& v : z) v = phi * v + innovation * state_rng.normal();

    TruthRecord rec;
    rec.timestamp = t;
    rec.eta = tidal_elevation(hours, cfg.constituents);
    rec.fraction = mixing_fraction(hours, cfg.constituents, cfg.mixing);
    rec.mixing = mix_end_members(rec.fraction, cfg.river, cfg.sea, cfg.decay);
    rec.state = noisy ? apply_state_noise(rec.mixing, cfg.noise, z) : rec.mixing;
    const auto& s = rec.state;

    const std::int64_t minute = rel / kMinute;
    if (minute % cfg.cadence.nitrate_min == 0) {
      double reading = cfg.drift_gain * s.nitrate + cfg.drift_offset;
      if (noisy) reading += cfg.sensor_nitrate_std * sensor_rng.normal();
      if (!detail::in_outage(rel, nitrate_gaps)) out.nitrate.push_back({t, std::max(0.0, reading), 0});
    }
    if (minute % cfg.cadence.salinity_min == 0 && !detail::in_outage(rel, nitrate_gaps))
      out.salinity.push_back({t, s.salinity});
    if (minute % cfg.cadence.scan_min == 0) {
      const auto rrs = forward_rrs(s.tss, s.cdom440, s.chl, cfg.optics, grid);
      if (cfg.truth_rrs) rec.rrs = rrs;
      const double mu = cos_solar_zenith(t, cfg.radiometry.latitude_deg, cfg.radiometry.longitude_deg);
      const double sza = std::clamp(std::acos(std::clamp(mu, -1.0, 1.0)) * 180.0 / std::numbers::pi, 0.0, 80.0);
      const ViewGeometry geom{sza, cfg.radiometry.view_zenith_deg, cfg.radiometry.relative_azimuth_deg};
      const auto ed = daylight_ed(grid, cfg.radiometry.ed_peak, mu);
      const auto lsky = sky_radiance(ed, grid, cfg.radiometry.sky_fraction);
      const auto factor = lut.factors_at(geom, wl);
      std::vector<double> lw(grid.count());
      for (std::size_t i = 0; i < lw.size(); ++i) {
        double r = rrs[i] / factor[i];
        if (noisy) r *= 1.0 + cfg.rrs_noise * scan_rng.normal();
        lw[i] = r * ed[i] + cfg.radiometry.rho * lsky[i];
      }
      if (noisy && scan_rng.uniform() < cfg.bad_scan_fraction) {
        if (scan_rng.uniform() < 0.5) {
          // bird or debris: one hot band
          const auto band = static_cast<std::size_t>(scan_rng.below(lw.size()));
          lw[band] = 20.0 * lw[band] + 0.05 * ed[band];
        } else {
          // sun glint: broadband surface reflection
          for (std::size_t i = 0; i < lw.size(); ++i) lw[i] += 0.15 * ed[i];
        }
      }
      if (!detail::in_outage(rel, scan_gaps)) {
        RawScan scan;
        scan.timestamp = t;
        scan.geometry = geom;
        scan.channels.emplace("ed", RawSpectrum{wl, ed});
        scan.channels.emplace("lsky", RawSpectrum{wl, lsky});
        scan.channels.emplace("lw_nadir", RawSpectrum{wl, std::move(lw)});
        out.scans.push_back(std::move(scan));
      }
    }
    out.truth.push_back(std::move(rec));
  }

  // Lab samples: random nitrate readings, sampled within one base step of the
  // reading time, measured against the realized state.
  if (!out.nitrate.empty() && cfg.lab_count > 0) {
    std::vector<std::size_t> picks;
    const auto n = out.nitrate.size();
    const auto want = std::min<std::size_t>(static_cast<std::size_t>(cfg.lab_count), n);
    while (picks.size() < want) {
      const auto i = static_cast<std::size_t>(lab_rng.below(n));
      if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
    }
    std::sort(picks.begin(), picks.end());
    for (auto i : picks) {
      const std::int64_t shift = (static_cast<std::int64_t>(lab_rng.below(3)) - 1) * step_s;
      std::int64_t rel = (out.nitrate[i].timestamp - cfg.start) + shift;
      rel = std::clamp<std::int64_t>(rel, 0, (ticks - 1) * step_s);
      const auto& rec = out.truth[static_cast<std::size_t>(rel / step_s)];
      double value = rec.state.nitrate;
      if (noisy) value += cfg.lab_std * lab_rng.normal();
      out.labs.push_back({rec.timestamp, std::max(0.0, value)});
    }
  }
  return out;
}

// ------------------------------------------------------------ truth JSONL

inline std::string truth_to_json_line(const TruthRecord& r) {
  auto state = [](const WaterState& w) {
    return "{\"salinity_psu\":" + format_double(w.salinity) + ",\"nitrate_mg_per_l\":" + format_double(w.nitrate) +
           ",\"tss_mg_per_l\":" + format_double(w.tss) + ",\"cdom440_per_m\":" + format_double(w.cdom440) +
           ",\"chl_ug_per_l\":" + format_double(w.chl) + "}";
  };
  std::string out = "{\"timestamp\":\"" + format_iso8601(r.timestamp) + "\",\"eta_m\":" + format_double(r.eta) +
                    ",\"seawater_fraction\":" + format_double(r.fraction) + ",\"mixing\":" + state(r.mixing) +
                    ",\"state\":" + state(r.state);
  if (!r.rrs.empty()) {
    out += ",\"rrs\":[";
    for (std::size_t i = 0; i < r.rrs.size(); ++i) out += (i ? "," : "") + format_double(r.rrs[i]);
    out += "]";
  }
  return out + "}";
}

inline std::vector<TruthRecord> parse_truth_jsonl(std::string_view text) {
  std::vector<TruthRecord> out;
  auto state = [](const nlohmann::json& j) {
    return WaterState{j.at("salinity_psu").get<double>(), j.at("nitrate_mg_per_l").get<double>(),
                      j.at("tss_mg_per_l").get<double>(), j.at("cdom440_per_m").get<double>(),
                      j.at("chl_ug_per_l").get<double>()};
  };
  for_each_data_line(text, [&](std::size_t row, std::string_view line) {
    try {
      const auto j = nlohmann::json::parse(line);
      TruthRecord r;
      r.timestamp = detail::field_time(row, j.at("timestamp").get<std::string>());
      r.eta = j.at("eta_m").get<double>();
      r.fraction = j.at("seawater_fraction").get<double>();
      r.mixing = state(j.at("mixing"));
      r.state = state(j.at("state"));
      if (j.contains("rrs")) r.rrs = j["rrs"].get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(row, e.what());
    }
  });
  return out;
}

}  // namespace wqdiff
