#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "wqdiff/ingest.hpp"
#include "wqdiff/rng.hpp"

using namespace wqdiff;

namespace {

const UtcTime t0 = make_utc(2024, 2, 1, 10);

UtcTime at(int minutes, int seconds = 0) { return t0 + minutes * kMinute + seconds; }

ReflectanceSpectrum spectrum(UtcTime t, double tag = 0.0) { return {t, {tag, 0.01, 0.02}, std::nullopt}; }

std::vector<NitrateReading> readings(const std::vector<std::pair<int, double>>& v) {
  std::vector<NitrateReading> out;
  for (auto [m, c] : v) out.push_back({at(m), c, 0});
  return out;
}

}  // namespace

// ----------------------------------------------------------------- drift

TEST(DriftCalibrate, IdentityFit) {
  const auto r = readings({{0, 0.05}, {60, 0.11}, {120, 0.17}, {180, 0.13}});
  std::vector<LabSample> labs;
  for (const auto& x : r) labs.push_back({x.timestamp, x.concentration});
  const auto cal = drift_calibrate(r, labs);
  EXPECT_NEAR(cal.report.gain, 1.0, 1e-12);
  EXPECT_NEAR(cal.report.offset, 0.0, 1e-12);
}

TEST(DriftCalibrate, ConstantOffset) {
  const auto r = readings({{0, 0.06}, {60, 0.12}, {120, 0.18}});
  std::vector<LabSample> labs;
  for (const auto& x : r) labs.push_back({x.timestamp, x.concentration - 0.01});
  const auto cal = drift_calibrate(r, labs);
  EXPECT_NEAR(cal.report.gain, 1.0, 1e-12);
  EXPECT_NEAR(cal.report.offset, -0.01, 1e-12);
}

TEST(DriftCalibrate, ExactOffsetFixture) {
  const auto r = readings({{0, 0.10}, {60, 0.20}, {120, 0.30}});
  const std::vector<LabSample> labs{{at(0), 0.12}, {at(60), 0.22}, {at(120), 0.32}};
  const auto cal = drift_calibrate(r, labs);
  EXPECT_NEAR(cal.report.gain, 1.0, 1e-12);
  EXPECT_NEAR(cal.report.offset, 0.02, 1e-12);
  EXPECT_NEAR(cal.report.residual_rmse, 0.0, 1e-12);
  EXPECT_NEAR(cal.readings[1].concentration, 0.22, 1e-12);
}

TEST(DriftCalibrate, LabsMatchWithinThirtyMinutes) {
  const auto r = readings({{0, 0.10}, {10, 0.20}, {120, 0.30}});
  // 4 min after the second reading, 29 min after the third.
  const std::vector<LabSample> labs{{at(14), 0.4}, {at(149), 0.6}};
  const auto cal = drift_calibrate(r, labs);
  ASSERT_EQ(cal.report.pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(cal.report.pairs[0].first, 0.20);
  EXPECT_DOUBLE_EQ(cal.report.pairs[1].first, 0.30);
  EXPECT_THROW(drift_calibrate(r, {{at(14), 0.4}, {at(151), 0.6}}), UnmatchableLabSample);
  EXPECT_THROW(drift_calibrate(r, {{at(0), 0.4}}), InsufficientLabSamples);
}

TEST(DriftCalibrate, FixedPointOnCorrectedReadings) {
  Rng rng(9);
  std::vector<NitrateReading> r;
  std::vector<LabSample> labs;
  for (int i = 0; i < 500; ++i) r.push_back({at(10 * i), rng.uniform(0.02, 0.2), 0});
  for (int i = 0; i < 12; ++i) {
    const auto& x = r[static_cast<std::size_t>(40 * i + 3)];
    labs.push_back({x.timestamp, 0.97 * x.concentration - 0.003 + 0.001 * rng.normal()});
  }
  const auto first = drift_calibrate(r, labs);
  const auto second = drift_calibrate(first.readings, labs);
  EXPECT_NEAR(second.report.gain, 1.0, 1e-9);
  EXPECT_NEAR(second.report.offset, 0.0, 1e-9);
  EXPECT_NEAR(second.report.residual_rmse, first.report.residual_rmse, 1e-12);
}

// --------------------------------------------------------------- pairing

TEST(PairObservations, NearestWithinWindow) {
  const auto n = readings({{0, 0.1}});
  const std::vector<SalinityReading> s{{at(0), 10.0}};
  const auto m = pair_observations({spectrum(at(4), 4), spectrum(at(7), 7)}, n, s);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].rrs_timestamp, at(4));
  EXPECT_EQ(m[0].timestamp, at(0));
  EXPECT_DOUBLE_EQ(m[0].salinity, 10.0);
}

TEST(PairObservations, OutsideWindowUnmatched) {
  const auto n = readings({{0, 0.1}});
  const std::vector<SalinityReading> s{{at(0), 10.0}};
  EXPECT_TRUE(pair_observations({spectrum(at(6))}, n, s).empty());
  // exactly 5 min is inside
  EXPECT_EQ(pair_observations({spectrum(at(5))}, n, s).size(), 1u);
}

TEST(PairObservations, TieGoesToEarlierSpectrum) {
  const auto n = readings({{0, 0.1}});
  const std::vector<SalinityReading> s{{at(0), 10.0}};
  const auto m = pair_observations({spectrum(at(-3), -3), spectrum(at(3), 3)}, n, s);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].rrs_timestamp, at(-3));
}

TEST(PairObservations, SpectrumUsedOnceGreedyByDistance) {
  // Spectrum at +4 is nearest to the reading at +5 (1 min) and second to 0 (4 min).
  const auto n = readings({{0, 0.1}, {5, 0.2}});
  const std::vector<SalinityReading> s{{at(0), 10.0}, {at(5), 11.0}};
  const auto m = pair_observations({spectrum(at(4))}, n, s);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].timestamp, at(5));
  EXPECT_DOUBLE_EQ(m[0].salinity, 11.0);
}

TEST(PairObservations, NeedsSalinityWithinWindow) {
  const auto n = readings({{0, 0.1}});
  EXPECT_TRUE(pair_observations({spectrum(at(1))}, n, {{at(6), 10.0}}).empty());
}

TEST(PairObservations, RandomStreamsRespectWindowAndAreDeterministic) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed);
    std::vector<ReflectanceSpectrum> spectra;
    std::vector<NitrateReading> nitrate;
    std::vector<SalinityReading> salinity;
    std::int64_t t = 0;
    for (int i = 0; i < 200; ++i) spectra.push_back(spectrum(t0 + (t += 1 + static_cast<std::int64_t>(rng.below(900)))));
    t = 0;
    for (int i = 0; i < 200; ++i) {
      t += 1 + static_cast<std::int64_t>(rng.below(900));
      nitrate.push_back({t0 + t, rng.uniform(), 0});
      salinity.push_back({t0 + t + static_cast<std::int64_t>(rng.below(400)) - 200, rng.uniform(0, 35)});
    }
    std::sort(salinity.begin(), salinity.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
    const auto window = static_cast<std::int64_t>(60 + rng.below(600));
    const auto m = pair_observations(spectra, nitrate, salinity, window);
    std::set<std::int64_t> used;
    for (const auto& x : m) {
      EXPECT_LE(abs_diff(x.timestamp, x.rrs_timestamp), window);
      EXPECT_TRUE(used.insert(x.rrs_timestamp.seconds).second) << "spectrum reused";
    }
    const auto again = pair_observations(spectra, nitrate, salinity, window);
    ASSERT_EQ(again.size(), m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_EQ(again[i].timestamp, m[i].timestamp);
      EXPECT_EQ(again[i].rrs_timestamp, m[i].rrs_timestamp);
      EXPECT_EQ(again[i].salinity, m[i].salinity);
    }
  }
}

// ----------------------------------------------------------------- split

TEST(Split, SevenThree) {
  const auto s = split_train_test(10, 0.7, 1);
  EXPECT_EQ(s.train_ids.size(), 7u);
  EXPECT_EQ(s.test_ids.size(), 3u);
}

TEST(Split, DeterministicUnderSeed) {
  const auto a = split_train_test(100, 0.7, 77), b = split_train_test(100, 0.7, 77);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.test_ids, b.test_ids);
  EXPECT_NE(split_train_test(100, 0.7, 78).train_ids, a.train_ids);
}

TEST(Split, PartitionForRandomSizesRatiosSeeds) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = static_cast<std::size_t>(10 + rng.below(500));
    const double ratio = rng.uniform(0.01, 0.99);
    const auto s = split_train_test(n, ratio, rng.below(1u << 30));
    std::vector<std::size_t> all = s.train_ids;
    all.insert(all.end(), s.test_ids.begin(), s.test_ids.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
    EXPECT_LE(std::abs(static_cast<double>(s.train_ids.size()) - ratio * static_cast<double>(n)), 1.0);
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split_train_test(9, 0.7, 1), TooFewSamples);
  EXPECT_THROW(split_train_test(10, 1.0, 1), ConfigError);
}

TEST(Split, JsonRoundTrip) {
  const auto s = split_train_test(30, 0.7, 5);
  const auto back = split_from_json(split_to_json(s));
  EXPECT_EQ(back.train_ids, s.train_ids);
  EXPECT_EQ(back.test_ids, s.test_ids);
  EXPECT_EQ(back.seed, 5u);
}

// ------------------------------------------------------------------ load

TEST(Load, WellFormedThreeRows) {
  LoadReport rep;
  const auto v = parse_nitrate_csv(
      "timestamp_iso8601,nitrate_mg_per_l,flag\n2024-01-01T00:00:00Z,0.1,0\n2024-01-01T00:10:00Z,0.2,0\n"
      "2024-01-01T00:20:00Z,0.3,1\n",
      rep);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2].flag, 1);
  EXPECT_EQ(rep.rows, 3u);
}

TEST(Load, NegativeSalinityNamesRow) {
  LoadReport rep;
  try {
    parse_salinity_csv("timestamp_iso8601,salinity_psu\n2024-01-01T00:00:00Z,3\n2024-01-01T00:10:00Z,-1\n", rep);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
}

TEST(Load, OutOfOrderRowsAreSorted) {
  LoadReport rep;
  const auto v = parse_lab_csv(
      "timestamp_iso8601,nitrate_mg_per_l\n2024-01-01T02:00:00Z,0.3\n2024-01-01T00:00:00Z,0.1\n"
      "2024-01-01T01:00:00Z,0.2\n",
      rep);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_TRUE(std::is_sorted(v.begin(), v.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; }));
  EXPECT_EQ(rep.reordered, 1u);
  EXPECT_TRUE(rep.issues.empty());
}

TEST(Load, DuplicatesCollapseConflictsThrow) {
  LoadReport rep;
  const std::string head = "timestamp_iso8601,salinity_psu\n";
  const auto v = parse_salinity_csv(head + "2024-01-01T00:00:00Z,3\n2024-01-01T00:00:00Z,3\n", rep);
  EXPECT_EQ(v.size(), 1u);
  EXPECT_EQ(rep.duplicates_collapsed, 1u);
  LoadReport rep2;
  EXPECT_THROW(parse_salinity_csv(head + "2024-01-01T00:00:00Z,3\n2024-01-01T00:00:00Z,4\n", rep2),
               NonMonotonicTimestamps);
}

TEST(Load, LenientModeCollectsIssues) {
  LoadReport rep;
  const auto v = parse_nitrate_csv(
      "timestamp_iso8601,nitrate_mg_per_l,flag\n2024-01-01T00:00:00Z,abc,0\n2024-01-01T00:10:00Z,0.2,0\n", rep,
      LoadOptions{false});
  EXPECT_EQ(v.size(), 1u);
  ASSERT_EQ(rep.issues.size(), 1u);
  EXPECT_EQ(rep.issues[0].row, 2u);
}

TEST(Load, CsvWritersRoundTrip) {
  const auto n = readings({{0, 0.125}, {10, 0.2}});
  LoadReport rep;
  const auto back = parse_nitrate_csv(nitrate_to_csv(n), rep);
  EXPECT_EQ(back, n);
}

TEST(MatchedJsonl, RoundTripWithOptionalTargets) {
  MatchedSample a{at(0), at(2), std::vector<double>(351, 0.004), 12.5, 0.1, 7.25, 0.5};
  MatchedSample b{at(10), at(11), std::vector<double>(351, 0.001), 30.0, 0.03, std::nullopt, std::nullopt};
  const auto back = parse_matched_jsonl(matched_to_jsonl({a, b}));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].rrs, a.rrs);
  EXPECT_EQ(back[0].tss, 7.25);
  EXPECT_EQ(back[0].rrs_timestamp, at(2));
  EXPECT_FALSE(back[1].cdom);
  EXPECT_THROW(parse_matched_jsonl("{\"timestamp\":\"2024-01-01T00:00:00Z\"}\n"), SchemaError);
}
