// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance <path-to-wqdiff> [work-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "wqdiff/diffusion.hpp"
#include "wqdiff/estuary.hpp"
#include "wqdiff/eval.hpp"
#include "wqdiff/ingest.hpp"
#include "wqdiff/network.hpp"
#include "wqdiff/scan_io.hpp"
#include "wqdiff/spectral.hpp"

namespace fs = std::filesystem;
using namespace wqdiff;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// ------------------------------------------------------------ pipeline runs

struct ChainRun {
  bool ok = false;
  double seconds = 0;
  std::string log;
};

ChainRun run_chain(const std::string& cli, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  ChainRun r;
  const auto t0 = std::chrono::steady_clock::now();
  for (const std::string step :
       {"simulate --out campaign", "ingest --dir campaign --out matched.jsonl", "train --matched matched.jsonl --out model",
        "evaluate --checkpoint model/checkpoint.json --matched matched.jsonl --truth campaign/truth.jsonl"
        " --report metrics.json --scatter scatter.csv"}) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' --fixed-timestamp " + step + " >>run.log 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      r.log = "step '" + step + "' failed; see " + (dir / "run.log").string();
      return r;
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.ok = true;
  return r;
}

Verdict end_to_end(const fs::path& dir, const ChainRun& run) {
  if (!run.ok) return {false, run.log};
  const auto j = nlohmann::json::parse(read_file((dir / "metrics.json").string()));
  const double r2v = j.at("r2").get<double>(), rmsev = j.at("rmse_mg_per_l").get<double>();
  const auto matched = parse_matched_jsonl(read_file((dir / "matched.jsonl").string()));
  const bool ok = r2v >= 0.80 && rmsev <= 0.035 && run.seconds <= 600 && j.at("reference") == "truth" &&
                  j.at("split") == "test";
  return {ok, "matched=" + std::to_string(matched.size()) + " test_n=" + std::to_string(j.at("n").get<std::size_t>()) +
                  fmt(" R2=%.4f", r2v) + fmt(" RMSE=%.4f mg/L", rmsev) + fmt(" time=%.1f s", run.seconds)};
}

Verdict mixing_sign(const fs::path& dir, const ChainRun& run) {
  if (!run.ok) return {false, run.log};
  auto rows = parse_scatter_csv(read_file((dir / "scatter.csv").string()));
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.salinity_psu < b.salinity_psu; });
  const std::size_t decile = rows.size() / 10;
  if (decile == 0) return {false, "too few test rows"};
  double low = 0, high = 0;
  for (std::size_t i = 0; i < decile; ++i) {
    low += rows[i].nitrate_pred / static_cast<double>(decile);
    high += rows[rows.size() - 1 - i].nitrate_pred / static_cast<double>(decile);
  }
  const auto river = default_river(), sea = default_sea();
  return {river.nitrate > sea.nitrate && low > high,
          fmt("low-salinity decile mean=%.4f", low) + fmt(" > high-salinity decile mean=%.4f mg/L", high)};
}

Verdict determinism(const fs::path& a, const fs::path& b, const ChainRun& ra, const ChainRun& rb) {
  if (!ra.ok) return {false, ra.log};
  if (!rb.ok) return {false, rb.log};
  std::string detail;
  bool ok = true;
  for (const char* f : {"model/checkpoint.json", "model/split.json", "metrics.json"}) {
    const auto x = read_file((a / f).string()), y = read_file((b / f).string());
    const bool same = !x.empty() && x == y;
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : " ") + f + (same ? "=identical" : "=DIFFERS");
  }
  return {ok, detail};
}

// ---------------------------------------------------------- library checks

Verdict gradients() {
  Rng rng(777);
  const NoiseSchedule schedule = NoiseSchedule::from_config(TrainingConfig{});
  const int configs = 20;
  double worst = 0;
  std::size_t params = 0;
  for (int trial = 0; trial < configs; ++trial) {
    std::vector<std::size_t> hidden;
    const auto layers = 1 + rng.below(3);
    for (std::uint64_t l = 0; l < layers; ++l) hidden.push_back(1 + rng.below(32));
    const auto cond = static_cast<std::size_t>(1 + rng.below(10));
    const auto emb = static_cast<std::size_t>(2 * (1 + rng.below(8)));
    Denoiser model(cond, hidden, emb, rng.below(1u << 30));
    for (auto& l : model.layers())
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.1 * rng.normal();
    const Eigen::MatrixXd x0 = normal_matrix(3, 2, rng), c = normal_matrix(static_cast<Eigen::Index>(cond), 2, rng),
                          eps = normal_matrix(3, 2, rng);
    const std::vector<int> steps{1 + static_cast<int>(rng.below(200)), 1 + static_cast<int>(rng.below(200))};
    const auto analytic = diffusion_loss(model, schedule, x0, c, steps, eps, true);
    std::vector<double> flat;
    for (const auto& l : analytic.gradients.layers) {
      flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
      flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    if (flat.size() != model.parameter_count()) return {false, "gradient layout does not match parameters"};
    const double h = 1e-5;
    for (std::size_t p = 0; p < model.parameter_count(); ++p) {
      double& w = model.parameter(p);
      const double saved = w;
      w = saved + h;
      const double up = diffusion_loss(model, schedule, x0, c, steps, eps, false).value;
      w = saved - h;
      const double down = diffusion_loss(model, schedule, x0, c, steps, eps, false).value;
      w = saved;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(flat[p] - fd) / std::max({std::abs(flat[p]), std::abs(fd), 1e-6}));
    }
    params += model.parameter_count();
  }
  return {worst < 1e-4, std::to_string(configs) + " configs, " + std::to_string(params) + " parameters," +
                            fmt(" worst relative error=%.2e", worst)};
}

Verdict forward_process() {
  const auto s = NoiseSchedule::from_config(TrainingConfig{});
  Rng rng(2024);
  const Eigen::Index n = 100000;
  const Eigen::MatrixXd x0 = normal_matrix(3, n, rng), eps = normal_matrix(3, n, rng);
  const auto xt = forward_noise(x0, std::vector<int>(static_cast<std::size_t>(n), s.steps()), eps, s);
  bool ok = true;
  std::string detail = "T=" + std::to_string(s.steps());
  for (Eigen::Index d = 0; d < 3; ++d) {
    const double mean = xt.row(d).mean();
    const double var = (xt.row(d).array() - mean).square().sum() / static_cast<double>(n - 1);
    ok = ok && std::abs(mean) <= 0.02 && std::abs(var - 1) <= 0.05;
    detail += " [" + std::to_string(d) + "]" + fmt(" mean=%+.4f", mean) + fmt(" var=%.4f", var);
  }
  return {ok, detail};
}

Verdict radiometric_round_trip() {
  // Non-trivial geometry correction: factor varies with solar zenith and band.
  const auto id = BrdfLut::identity();
  std::vector<double> f;
  for (double sza : id.sza_axis())
    for ([[maybe_unused]] double vza : id.vza_axis())
      for ([[maybe_unused]] double raa : id.raa_axis())
        for (double wl : id.wavelength_axis()) f.push_back(1.0 + 0.002 * (sza - 30.0) * (wl > 500 ? 1.5 : 1.0));
  const BrdfLut lut(id.sza_axis(), id.vza_axis(), id.raa_axis(), id.wavelength_axis(), f);
  EstuaryConfig cfg;
  cfg.days = 3;
  cfg = cfg.noiseless();
  cfg.truth_rrs = true;
  const auto c = generate_campaign(cfg, lut);
  std::map<std::int64_t, const TruthRecord*> truth;
  for (const auto& t : c.truth) truth[t.timestamp.seconds] = &t;
  std::string text;
  for (const auto& s : c.scans) text += scan_to_json_line(s) + "\n";
  double worst = 0;
  std::size_t n = 0;
  for (const auto& raw : parse_scans_jsonl(text)) {
    const auto scan = assemble_scan(raw);
    const auto spec = brdf_normalize(compute_brf(scan, cfg.radiometry.rho), scan.geometry, lut);
    const auto& want = truth.at(raw.timestamp.seconds)->rrs;
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(spec.rrs[i] - want[i]));
    ++n;
  }
  return {n > 0 && worst <= 1e-10, std::to_string(n) + " scans," + fmt(" max |Rrs error|=%.2e sr^-1", worst)};
}

std::pair<std::vector<double>, std::vector<double>> nitrate_series(double days) {
  EstuaryConfig cfg;
  cfg.days = days;
  const auto c = generate_campaign(cfg);
  std::vector<double> t, v;
  for (const auto& r : c.nitrate) {
    t.push_back((r.timestamp - cfg.start) / 3600.0);
    v.push_back(r.concentration);
  }
  return {t, v};
}

Verdict semidiurnal() {
  const double m2_h = m2().period_h, s2_h = s2().period_h;
  const auto [t7, v7] = nitrate_series(7);
  const auto week = periodogram(t7, v7);
  const bool m2_ok = std::abs(week.dominant_period_h - m2_h) <= 0.05;

  const auto [t30, v30] = nitrate_series(30);
  const auto month = periodogram(t30, v30);
  const auto peaks = significant_peaks(month, month.significance);
  std::optional<double> m2_peak, s2_peak;
  for (const auto& p : peaks) {
    if (!m2_peak && std::abs(p.period_h - m2_h) <= 0.05) m2_peak = p.period_h;
    if (!s2_peak && std::abs(p.period_h - s2_h) <= 0.05) s2_peak = p.period_h;
  }
  std::string detail = fmt("7 d dominant=%.3f h", week.dominant_period_h) + fmt(" (M2 %.2f h)", m2_h) + "; 30 d peaks:";
  detail += m2_peak ? fmt(" M2 %.3f h", *m2_peak) : std::string(" M2 missing");
  detail += s2_peak ? fmt(" S2 %.3f h", *s2_peak) : std::string(" S2 missing");
  return {m2_ok && m2_peak && s2_peak, detail};
}

Verdict hand_cases() {
  const std::vector<double> t{1, 2, 3}, p{1, 2, 4};
  const double r2v = r2(t, p), rmsev = rmse(t, p);
  const auto at = [](int minutes) { return make_utc(2024, 3, 1) + minutes * kMinute; };
  const std::vector<NitrateReading> readings{{at(0), 0.10, 0}, {at(60), 0.20, 0}, {at(120), 0.30, 0}};
  const std::vector<LabSample> labs{{at(0), 0.12}, {at(60), 0.22}, {at(120), 0.32}};
  const auto cal = drift_calibrate(readings, labs);
  const bool ok = std::abs(r2v - 0.5) <= 1e-12 && std::abs(rmsev - std::sqrt(1.0 / 3.0)) <= 1e-12 &&
                  std::abs(cal.report.gain - 1.0) <= 1e-12 && std::abs(cal.report.offset - 0.02) <= 1e-12;
  return {ok, fmt("r2=%.15f", r2v) + fmt(" rmse=%.15f", rmsev) + fmt(" a=%.15f", cal.report.gain) +
                  fmt(" b=%.15f", cal.report.offset)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-wqdiff> [work-dir]\n";
    return 2;
  }
  const std::string cli = fs::absolute(argv[1]).string();
  const fs::path work = fs::absolute(argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "wqdiff_acceptance");
  const auto dir_a = work / "run_a", dir_b = work / "run_b";

  int failed = 0;
  const auto report = [&](const char* name, const Verdict& v) {
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    if (!v.pass) ++failed;
  };
  const auto guarded = [](const std::function<Verdict()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Verdict{false, std::string("exception: ") + e.what()};
    }
  };

  const auto run_a = run_chain(cli, dir_a);
  report("end-to-end", guarded([&] { return end_to_end(dir_a, run_a); }));
  report("gradients", guarded(gradients));
  report("forward-process", guarded(forward_process));
  report("radiometric-round-trip", guarded(radiometric_round_trip));
  report("semidiurnal-detection", guarded(semidiurnal));
  report("mixing-sign", guarded([&] { return mixing_sign(dir_a, run_a); }));
  report("metric-hand-cases", guarded(hand_cases));
  const auto run_b = run_chain(cli, dir_b);
  report("determinism", guarded([&] { return determinism(dir_a, dir_b, run_a, run_b); }));

  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " acceptance criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
