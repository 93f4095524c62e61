#include <gtest/gtest.h>

#include <cmath>

#include "wqdiff/estuary.hpp"
#include "wqdiff/kvconfig.hpp"
#include "wqdiff/scan_io.hpp"
#include "wqdiff/spectral.hpp"
#include "wqdiff/time.hpp"

using namespace wqdiff;

namespace {

RadiometricScan flat_scan(double ed, double lw, double lsky, std::size_t n = 351) {
  RadiometricScan s;
  s.timestamp = make_utc(2024, 1, 2, 3, 4, 5);
  s.ed.assign(n, ed);
  s.lw.assign(n, lw);
  s.lsky.assign(n, lsky);
  return s;
}

ReflectanceSpectrum oracle_spectrum() {
  return {make_utc(2024, 1, 1, 12), forward_rrs(10.0, 0.5, 2.0), std::nullopt};
}

}  // namespace

// ---------------------------------------------------------------- time/text

TEST(Time, RoundTripsIsoText) {
  const auto t = parse_iso8601("2023-10-31T23:59:58Z");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_iso8601(*t), "2023-10-31T23:59:58Z");
  EXPECT_EQ(*t, make_utc(2023, 10, 31, 23, 59, 58));
  EXPECT_EQ(make_utc(1970, 1, 1).seconds, 0);
  EXPECT_EQ(make_utc(2024, 3, 1) - make_utc(2024, 2, 28), 2 * kDay);  // leap year
}

TEST(Time, AcceptsVariantsAndRejectsOffsets) {
  EXPECT_EQ(parse_iso8601("2024-01-01 00:00:00"), make_utc(2024, 1, 1));
  EXPECT_EQ(parse_iso8601("2024-01-01T00:00:00.75+00:00"), make_utc(2024, 1, 1));
  EXPECT_FALSE(parse_iso8601("2024-01-01T00:00:00+01:00"));
  EXPECT_FALSE(parse_iso8601("2024-13-01T00:00:00Z"));
  EXPECT_FALSE(parse_iso8601("yesterday"));
}

TEST(Text, ParsesNumbersStrictly) {
  EXPECT_EQ(parse_double(" 1.5 "), 1.5);
  EXPECT_EQ(parse_double("+2"), 2.0);
  EXPECT_FALSE(parse_double("1.5x"));
  EXPECT_FALSE(parse_double(""));
  EXPECT_EQ(parse_int("42"), 42);
  EXPECT_FALSE(parse_int("4.2"));
  const double v = 0.1 + 0.2;
  EXPECT_EQ(parse_double(format_double(v)), v);
}

TEST(Text, CsvReportsRowOfBadFieldCount) {
  try {
    parse_csv("a,b\n1,2\n\n3\n", {"a", "b"});
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.row(), 4u);
  }
  EXPECT_THROW(parse_csv("x,y\n", {"a", "b"}), SchemaError);
  const auto t = parse_csv("# comment\na,b\n1,2\n", {"a", "b"});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].first, 3u);
}

TEST(KvConfig, TypedGettersAndSections) {
  const auto kv = KvConfig::parse("# c\nseed = 7\ntrain.k = 4 # inline\nlist = 1, 2,3\nflag = yes\nbad = x\n");
  EXPECT_EQ(kv.get_int("seed", 0), 7);
  EXPECT_EQ(kv.get_doubles("list", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_double("missing", 2.5), 2.5);
  EXPECT_THROW(kv.get_double("bad", 0), ConfigError);
  const auto sub = kv.section("train");
  EXPECT_EQ(sub.get_int("k", 0), 4);
  EXPECT_TRUE(kv.unused_keys().empty());
  EXPECT_THROW(KvConfig::parse("no equals sign"), ConfigError);
}

TEST(KvConfig, UnusedKeysAreReported) {
  const auto kv = KvConfig::parse("a = 1\ntypo = 2\n");
  (void)kv.get_int("a", 0);
  EXPECT_EQ(kv.unused_keys(), std::vector<std::string>{"typo"});
}

// ------------------------------------------------------------- compute_brf

TEST(ComputeBrf, SkylightTermVanishes) {
  const auto r = compute_brf(flat_scan(1.0, 0.05, 0.0));
  for (double v : r.rrs) EXPECT_DOUBLE_EQ(v, 0.05);
}

TEST(ComputeBrf, PerfectSkylightCancellation) {
  const double rho = 0.028;
  const auto r = compute_brf(flat_scan(1.3, rho * 0.4, 0.4), rho);
  for (double v : r.rrs) EXPECT_NEAR(v, 0.0, 1e-17);
}

TEST(ComputeBrf, DirectArithmetic) {
  const auto r = compute_brf(flat_scan(1.0, 0.05, 0.5), 0.028);
  for (double v : r.rrs) EXPECT_NEAR(v, 0.036, 1e-15);
  EXPECT_EQ(r.timestamp, make_utc(2024, 1, 2, 3, 4, 5));
  EXPECT_FALSE(r.qc);
}

TEST(ComputeBrf, Errors) {
  auto s = flat_scan(1.0, 0.05, 0.5);
  s.ed[100] = 0.0;
  EXPECT_THROW(compute_brf(s), NonPositiveIrradiance);
  auto g = flat_scan(1.0, 0.05, 0.5);
  g.lw.pop_back();
  EXPECT_THROW(compute_brf(g), GridMismatch);
  EXPECT_THROW(compute_brf(flat_scan(1, 0, 0), 0.2), ConfigError);
}

TEST(ComputeBrf, LinearInLwAndMonotoneInRho) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    RadiometricScan s = flat_scan(1, 0, 0, 60);
    for (std::size_t i = 0; i < 60; ++i) {
      s.ed[i] = rng.uniform(0.1, 2.0);
      s.lw[i] = rng.uniform(0.0, 0.1);
      s.lsky[i] = rng.uniform(0.0, 0.5);
    }
    RadiometricScan dark = s;
    std::fill(dark.lsky.begin(), dark.lsky.end(), 0.0);
    RadiometricScan doubled = dark;
    for (double& v : doubled.lw) v *= 2;
    const auto a = compute_brf(dark), b = compute_brf(doubled);
    const auto r0 = compute_brf(s, 0.0), r1 = compute_brf(s, rng.uniform(0.001, 0.1));
    for (std::size_t i = 0; i < 60; ++i) {
      EXPECT_EQ(b.rrs[i], 2 * a.rrs[i]);
      EXPECT_GE(r0.rrs[i], r1.rrs[i]);
    }
  }
}

// ------------------------------------------------------------ brdf_normalize

namespace {

// 2x2x2 angle table, one wavelength node (applies to every band).
BrdfLut small_lut(const std::array<double, 8>& f) {
  return BrdfLut({0, 20}, {0, 20}, {0, 60}, {500}, {f.begin(), f.end()}, ViewGeometry{0, 0, 0});
}

}  // namespace

TEST(BrdfNormalize, ReferenceGeometryIsIdentity) {
  const auto spec = oracle_spectrum();
  const auto lut = small_lut({1.0, 1.3, 0.7, 1.1, 1.2, 1.5, 0.9, 1.05});
  const auto out = brdf_normalize(spec, {0, 0, 0}, lut);
  EXPECT_EQ(out.rrs, spec.rrs);
  const auto id = BrdfLut::identity();
  const auto out2 = brdf_normalize(spec, {37, 12, 95}, id);
  EXPECT_EQ(out2.rrs, spec.rrs);
}

TEST(BrdfNormalize, UniformFactorScalesEveryBand) {
  const auto spec = oracle_spectrum();
  const auto lut = small_lut({1.0, 1.1, 1.1, 1.1, 1.1, 1.1, 1.1, 1.1});
  const auto out = brdf_normalize(spec, {20, 20, 60}, lut);
  for (std::size_t i = 0; i < spec.rrs.size(); ++i) EXPECT_NEAR(out.rrs[i], 1.1 * spec.rrs[i], 1e-18);
}

TEST(BrdfNormalize, MidwayBetweenBinsAveragesFactors) {
  // sza 0 -> 1.0, sza 20 -> 1.2 at every (vza, raa) node.
  const auto lut = small_lut({1.0, 1.0, 1.0, 1.0, 1.2, 1.2, 1.2, 1.2});
  const std::vector<double> wl{450.0, 600.0};
  const auto f = lut.factors_at({10, 7, 33}, wl);
  EXPECT_NEAR(f[0], 1.1, 1e-14);
  EXPECT_NEAR(f[1], 1.1, 1e-14);
}

TEST(BrdfNormalize, TrilinearMatchesHandComputation) {
  const std::array<double, 8> f{1.0, 1.3, 0.7, 1.1, 1.2, 1.5, 0.9, 1.05};  // index (i*2 + j)*2 + k
  const auto lut = small_lut(f);
  const double ti = 5.0 / 20, tj = 15.0 / 20, tk = 45.0 / 60;
  double want = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        want += f[static_cast<std::size_t>((i * 2 + j) * 2 + k)] * (i ? ti : 1 - ti) * (j ? tj : 1 - tj) *
                (k ? tk : 1 - tk);
  const std::vector<double> wl{500.0};
  EXPECT_NEAR(lut.factors_at({5, 15, 45}, wl)[0], want, 1e-14);
}

TEST(BrdfNormalize, OutsideTableIsRejected) {
  const auto lut = small_lut({1, 1, 1, 1, 1, 1, 1, 1});
  const auto spec = oracle_spectrum();
  EXPECT_THROW(brdf_normalize(spec, {25, 0, 0}, lut), GeometryOutOfRange);
  EXPECT_THROW(brdf_normalize(spec, {0, 0, 61}, lut), GeometryOutOfRange);
}

TEST(BrdfLut, RejectsBadTables) {
  EXPECT_THROW(BrdfLut({0, 20}, {0}, {0}, {500}, {1.0, 2.5}), ConfigError);
  EXPECT_THROW(BrdfLut({0, 20}, {0}, {0}, {500}, {1.0}), ConfigError);
  EXPECT_THROW(BrdfLut({0, 20}, {0}, {0}, {500}, {1.1, 1.0}, ViewGeometry{0, 0, 0}), ConfigError);  // not identity at reference
  EXPECT_THROW(BrdfLut({20, 0}, {0}, {0}, {500}, {1.0, 1.0}), ConfigError);
}

TEST(BrdfLut, CsvRoundTrip) {
  const auto lut = small_lut({1.0, 1.3, 0.7, 1.1, 1.2, 1.5, 0.9, 1.05});
  const auto back = parse_brdf_lut(brdf_lut_to_csv(lut), ViewGeometry{0, 0, 0});
  EXPECT_EQ(back.sza_axis(), lut.sza_axis());
  const std::vector<double> wl{500.0};
  EXPECT_EQ(back.factors_at({7, 3, 21}, wl), lut.factors_at({7, 3, 21}, wl));
  EXPECT_THROW(parse_brdf_lut("sza_deg,vza_deg,raa_deg,wavelength_nm,factor\n0,0,0,500,3\n"), SchemaError);
}

// ------------------------------------------------------------ quality_filter

TEST(QualityFilter, SmoothOracleSpectrumAccepted) {
  for (double tss : {0.0, 3.0, 40.0})
    for (double cdom : {0.0, 0.05, 1.5}) {
      const ReflectanceSpectrum s{{}, forward_rrs(tss, cdom, 2.0), std::nullopt};
      const auto q = quality_filter(s);
      EXPECT_TRUE(q.accepted()) << tss << " " << cdom;
    }
}

TEST(QualityFilter, TenPercentNegativeBandsRejected) {
  auto s = oracle_spectrum();
  for (std::size_t i = 0; i < 35; ++i) s.rrs[300 + i] = -1e-5;
  const auto q = quality_filter(s);
  EXPECT_FALSE(q.accepted());
  EXPECT_TRUE(q.has(QcCode::NegativeBands));
}

TEST(QualityFilter, InjectedSpikeRejected) {
  auto s = oracle_spectrum();
  ASSERT_TRUE(quality_filter(s).accepted());
  s.rrs[150] *= 20.0;
  const auto q = quality_filter(s);
  EXPECT_FALSE(q.accepted());
  EXPECT_TRUE(q.has(QcCode::Spike));
}

TEST(QualityFilter, CeilingAndNonFinite) {
  auto s = oracle_spectrum();
  s.rrs[10] = 0.5;
  EXPECT_TRUE(quality_filter(s).has(QcCode::OutOfRangeShape));
  auto n = oracle_spectrum();
  n.rrs[10] = std::nan("");
  EXPECT_TRUE(quality_filter(n).has(QcCode::OutOfRangeShape));
}

TEST(QualityFilter, ScanLevelChecks) {
  auto s = flat_scan(0.001, 0.01, 0.01);
  EXPECT_TRUE(quality_filter_scan(s).has(QcCode::LowEd));
  QcThresholds th;
  th.saturation_level = 0.5;
  auto sat = flat_scan(1.0, 0.6, 0.01);
  EXPECT_TRUE(quality_filter_scan(sat, th).has(QcCode::Saturation));
  EXPECT_TRUE(quality_filter_scan(flat_scan(0.4, 0.01, 0.01), th).accepted());
}

TEST(QualityFilter, Deterministic) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = oracle_spectrum();
    for (double& v : s.rrs) v *= 1 + 0.5 * rng.normal();
    EXPECT_EQ(quality_filter(s), quality_filter(s));
    EXPECT_EQ(quality_filter(s).accepted(), quality_filter(s).reasons.empty());
  }
}

// -------------------------------------------------------------- trim_to_grid

namespace {

RawSpectrum ramp(double lo, double hi, double step) {
  RawSpectrum r;
  for (double x = lo; x <= hi + 1e-9; x += step) {
    r.wavelength_nm.push_back(x);
    r.values.push_back(x * 1e-4);
  }
  return r;
}

}  // namespace

TEST(TrimToGrid, SlicesWiderRange) {
  const auto out = trim_to_grid(ramp(350, 900, 1));
  ASSERT_EQ(out.values.size(), 351u);
  EXPECT_EQ(out.wavelength_nm.front(), 400.0);
  EXPECT_EQ(out.wavelength_nm.back(), 750.0);
  EXPECT_DOUBLE_EQ(out.values.front(), 0.04);
}

TEST(TrimToGrid, ExactRangeIsIdentity) {
  const auto in = ramp(400, 750, 1);
  const auto out = trim_to_grid(in);
  EXPECT_EQ(out.values, in.values);
  EXPECT_EQ(out.wavelength_nm, in.wavelength_nm);
}

TEST(TrimToGrid, MissingBlueCoverage) { EXPECT_THROW(trim_to_grid(ramp(450, 750, 1)), InsufficientCoverage); }

TEST(TrimToGrid, IdempotentOnIrregularNativeGrids) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    RawSpectrum r;
    double x = 380 + rng.uniform(0, 5);
    while (x < 780) {
      r.wavelength_nm.push_back(x);
      r.values.push_back(rng.uniform());
      x += rng.uniform(0.3, 3.3);
    }
    const auto once = trim_to_grid(r);
    const auto twice = trim_to_grid(once);
    EXPECT_EQ(once.values, twice.values);
    EXPECT_EQ(once.wavelength_nm, twice.wavelength_nm);
  }
}

TEST(TrimToGrid, TiesGoToShorterWavelength) {
  const auto out = trim_to_grid(ramp(399.5, 750.5, 1));
  EXPECT_DOUBLE_EQ(out.values[0], 399.5e-4);
}

// ----------------------------------------------------------------- scan I/O

namespace {

RawScan raw_scan(UtcTime t, bool nadir = true) {
  RawScan s;
  s.timestamp = t;
  s.geometry = {30, 40, 120};
  const auto wl = default_grid().wavelengths();
  s.channels.emplace("ed", RawSpectrum{wl, std::vector<double>(wl.size(), 1.25)});
  s.channels.emplace("lsky", RawSpectrum{wl, std::vector<double>(wl.size(), 0.125)});
  if (nadir) s.channels.emplace("lw_nadir", RawSpectrum{wl, std::vector<double>(wl.size(), 0.01)});
  s.channels.emplace("lw_east", RawSpectrum{wl, std::vector<double>(wl.size(), 0.02)});
  s.channels.emplace("lw_west", RawSpectrum{wl, std::vector<double>(wl.size(), 0.04)});
  return s;
}

void expect_same(const RawScan& a, const RawScan& b) {
  EXPECT_EQ(a.timestamp, b.timestamp);
  EXPECT_EQ(a.geometry, b.geometry);
  ASSERT_EQ(a.channels.size(), b.channels.size());
  for (const auto& [name, s] : a.channels) {
    ASSERT_TRUE(b.channels.count(name));
    EXPECT_EQ(s.values, b.channels.at(name).values);
    EXPECT_EQ(s.wavelength_nm, b.channels.at(name).wavelength_nm);
  }
}

}  // namespace

TEST(ScanIo, JsonLinesRoundTrip) {
  const std::vector<RawScan> scans{raw_scan(make_utc(2024, 1, 1, 10)), raw_scan(make_utc(2024, 1, 1, 10, 15), false)};
  std::string text;
  for (const auto& s : scans) text += scan_to_json_line(s) + "\n";
  const auto back = parse_scans_jsonl(text);
  ASSERT_EQ(back.size(), 2u);
  expect_same(scans[0], back[0]);
  expect_same(scans[1], back[1]);
}

TEST(ScanIo, LongCsvRoundTrip) {
  const std::vector<RawScan> scans{raw_scan(make_utc(2024, 1, 1, 10)), raw_scan(make_utc(2024, 1, 1, 10, 15))};
  const auto back = parse_scans_csv(scans_to_csv(scans));
  ASSERT_EQ(back.size(), 2u);
  expect_same(scans[0], back[0]);
  expect_same(scans[1], back[1]);
}

TEST(ScanIo, SensorSelectionRecordsSource) {
  const auto nadir = assemble_scan(raw_scan(make_utc(2024, 1, 1)));
  EXPECT_EQ(nadir.lw_source, "lw_nadir");
  EXPECT_DOUBLE_EQ(nadir.lw[0], 0.01);
  const auto tilted = assemble_scan(raw_scan(make_utc(2024, 1, 1), false));
  EXPECT_EQ(tilted.lw_source, "mean(lw_east+lw_west)");
  EXPECT_DOUBLE_EQ(tilted.lw[0], 0.03);
}

TEST(ScanIo, MalformedLineNamesRow) {
  const std::string text = scan_to_json_line(raw_scan(make_utc(2024, 1, 1))) + "\n{not json\n";
  try {
    parse_scans_jsonl(text);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}
