// wqdiff: command-line front end.
//
//   wqdiff [--config PATH] [--seed N] [--fixed-timestamp] <subcommand> ...
//
// Exit codes: 0 ok, 2 configuration or input error, 3 numeric failure,
// 4 integrity mismatch, 1 anything unexpected.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wqdiff/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wqdiff;

namespace {

constexpr const char* kFixedTimestamp = "2000-01-01T00:00:00Z";

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool fixed_timestamp = false;
};

std::string now_iso(const Globals& g) {
  if (g.fixed_timestamp) return kFixedTimestamp;
  const auto s = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch());
  return format_iso8601(UtcTime{s.count()});
}

RunConfig load_config(const Globals& g, KvConfig& kv) {
  if (!g.config_path.empty()) kv = KvConfig::load(g.config_path);
  RunConfig cfg = run_config_from_kv(kv);
  if (g.seed) cfg.apply_seed(*g.seed);
  for (const auto& k : kv.unused_keys()) std::cerr << "warning: unknown config key '" << k << "'\n";
  return cfg;
}

std::string header_line(const std::string& command, const RunConfig& cfg, const Globals& g) {
  return "# wqdiff " + command + " seed=" + std::to_string(cfg.seed) + " created=" + now_iso(g) + "\n";
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_out(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file(path, text);
}

std::string required_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw InputError(std::string(what) + " not found: " + path);
  return read_file(path);
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string out_dir = "campaign";
  std::optional<double> days;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  KvConfig kv;
  RunConfig cfg = load_config(g, kv);
  EstuaryConfig ec = cfg.estuary;
  if (a.days) ec.days = *a.days;
  ec.validate();
  const BrdfLut lut = load_brdf_lut(ec.brdf_lut_path.empty() ? cfg.brdf_lut_path : ec.brdf_lut_path, cfg.brdf_reference);
  const Campaign c = generate_campaign(ec, lut);
  fs::create_directories(a.out_dir);
  const auto head = header_line("simulate", cfg, g);
  const fs::path dir(a.out_dir);
  write_file((dir / "nitrate.csv").string(), head + nitrate_to_csv(c.nitrate));
  write_file((dir / "salinity.csv").string(), head + salinity_to_csv(c.salinity));
  write_file((dir / "labs.csv").string(), head + lab_to_csv(c.labs));
  if (ec.scan_format == "csv") {
    write_file((dir / "scans.csv").string(), head + scans_to_csv(c.scans));
  } else {
    std::string text = head;
    for (const auto& s : c.scans) text += scan_to_json_line(s) + "\n";
    write_file((dir / "scans.jsonl").string(), text);
  }
  std::string truth = head;
  for (const auto& r : c.truth) truth += truth_to_json_line(r) + "\n";
  write_file((dir / "truth.jsonl").string(), truth);
  std::cout << "simulate: " << c.nitrate.size() << " nitrate, " << c.salinity.size() << " salinity, " << c.labs.size()
            << " lab, " << c.scans.size() << " scan records -> " << a.out_dir << "\n";
  return 0;
}

// ----------------------------------------------------------------- ingest

struct IngestArgs {
  std::string dir;  // campaign directory with the simulate file names
  std::string scans, nitrate, salinity, labs, truth;
  std::string out = "matched.jsonl";
  std::string report;
};

nlohmann::ordered_json load_report_json(const LoadReport& r) {
  nlohmann::ordered_json j;
  j["rows"] = r.rows;
  j["reordered"] = r.reordered;
  j["duplicates_collapsed"] = r.duplicates_collapsed;
  j["issues"] = r.issues.size();
  return j;
}

int cmd_ingest(const Globals& g, IngestArgs a) {
  KvConfig kv;
  RunConfig cfg = load_config(g, kv);
  if (!a.dir.empty()) {
    const fs::path d(a.dir);
    if (a.scans.empty()) a.scans = fs::exists(d / "scans.jsonl") ? (d / "scans.jsonl").string() : (d / "scans.csv").string();
    if (a.nitrate.empty()) a.nitrate = (d / "nitrate.csv").string();
    if (a.salinity.empty()) a.salinity = (d / "salinity.csv").string();
    if (a.labs.empty() && cfg.drift_correction) a.labs = (d / "labs.csv").string();
    if (a.truth.empty() && fs::exists(d / "truth.jsonl")) a.truth = (d / "truth.jsonl").string();
  }
  if (a.scans.empty() || a.nitrate.empty() || a.salinity.empty())
    throw ConfigError("ingest needs --scans, --nitrate and --salinity (or --dir)");
  if (!fs::is_regular_file(a.scans)) throw InputError("scan file not found: " + a.scans);
  const auto scans = load_scans(a.scans);
  const auto nitrate = required_file(a.nitrate, "nitrate file");
  const auto salinity = required_file(a.salinity, "salinity file");
  const std::string labs = cfg.drift_correction ? required_file(a.labs, "lab file") : std::string();
  std::optional<std::vector<TruthRecord>> truth;
  if (!a.truth.empty()) truth = parse_truth_jsonl(required_file(a.truth, "truth file"));

  const auto res = ingest(scans, nitrate, salinity, labs, truth ? &*truth : nullptr, cfg);
  write_out(a.out, header_line("ingest", cfg, g) + matched_to_jsonl(res.matched));

  nlohmann::ordered_json rep;
  rep["created"] = now_iso(g);
  rep["seed"] = cfg.seed;
  rep["scans"] = res.scans.scans;
  rep["scans_accepted"] = res.scans.accepted;
  rep["scans_rejected"] = res.scans.rejected;
  rep["nitrate_readings"] = res.nitrate_readings;
  rep["matched"] = res.matched.size();
  rep["truth_attached"] = res.truth_attached;
  if (res.calibration) {
    rep["calibration"] = {{"gain", res.calibration->gain},
                          {"offset", res.calibration->offset},
                          {"residual_rmse", res.calibration->residual_rmse},
                          {"pairs", res.calibration->pairs.size()}};
  }
  rep["nitrate_file"] = load_report_json(res.nitrate_load);
  rep["salinity_file"] = load_report_json(res.salinity_load);
  rep["lab_file"] = load_report_json(res.lab_load);
  const std::string report_path = a.report.empty() ? (fs::path(a.out).replace_extension(".report.json")).string() : a.report;
  write_out(report_path, rep.dump(2) + "\n");
  std::cout << "ingest: " << res.scans.accepted << "/" << res.scans.scans << " scans accepted, " << res.matched.size()
            << " matched samples -> " << a.out << "\n";
  if (res.calibration)
    std::cout << "drift: gain " << res.calibration->gain << ", offset " << res.calibration->offset << ", residual rmse "
              << res.calibration->residual_rmse << "\n";
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string matched = "matched.jsonl";
  std::string out_dir = "model";
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  KvConfig kv;
  RunConfig cfg = load_config(g, kv);
  const auto text = required_file(a.matched, "matched-sample file");
  const auto samples = parse_matched_jsonl(text);
  const auto out = train_pipeline(samples, content_hash(text), cfg, now_iso(g));
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_file((dir / "checkpoint.json").string(), out.checkpoint);
  write_file((dir / "split.json").string(), out.split);
  write_file((dir / "loss_history.csv").string(), header_line("train", cfg, g) + out.loss_history);
  if (!out.fit.model.encoder.warning.empty()) std::cerr << "warning: " << out.fit.model.encoder.warning << "\n";
  const auto& h = out.fit.history;
  std::cout << "train: " << h.back().epoch << " epochs (best " << out.fit.best_epoch << "), loss " << h.front().train_loss
            << " -> " << h.back().train_loss << " -> " << a.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint = "model/checkpoint.json";
  std::string input;
  std::string out = "predictions.csv";
  std::optional<std::size_t> draws;
};

int cmd_predict(const Globals& g, const PredictArgs& a) {
  KvConfig kv;
  RunConfig cfg = load_config(g, kv);
  const auto ckpt = checkpoint_from_string(required_file(a.checkpoint, "checkpoint"));
  const auto conds = parse_conditions_jsonl(required_file(a.input, "input file"));
  std::vector<std::vector<double>> rrs;
  std::vector<double> sal;
  for (const auto& c : conds) {
    rrs.push_back(c.rrs);
    sal.push_back(c.salinity);
  }
  SamplingOptions opt;
  opt.draws = a.draws.value_or(cfg.draws);
  opt.seed = cfg.stream_seed("predict");
  opt.threads = cfg.threads;
  const auto preds = predict_batch(ckpt.model, rrs, sal, opt);
  write_out(a.out, header_line("predict", cfg, g) + predictions_to_csv(conds, preds));
  std::cout << "predict: " << preds.size() << " predictions (K = " << opt.draws << ") -> " << a.out << "\n";
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint = "model/checkpoint.json";
  std::string split;  // default: split.json beside the checkpoint
  std::string matched = "matched.jsonl";
  std::string truth;
  std::string report = "metrics.json";
  std::string scatter = "scatter.csv";
  bool on_train = false;
};

int cmd_evaluate(const Globals& g, EvaluateArgs a) {
  KvConfig kv;
  RunConfig cfg = load_config(g, kv);
  if (a.split.empty()) a.split = (fs::path(a.checkpoint).parent_path() / "split.json").string();
  const auto ckpt = checkpoint_from_string(required_file(a.checkpoint, "checkpoint"));
  const auto split = required_file(a.split, "split file");
  const auto text = required_file(a.matched, "matched-sample file");
  const auto samples = parse_matched_jsonl(text);
  std::optional<std::vector<TruthRecord>> truth;
  if (!a.truth.empty()) truth = parse_truth_jsonl(required_file(a.truth, "truth file"));
  const auto ev = evaluate_pipeline(ckpt, split, samples, content_hash(text), cfg, a.on_train, truth ? &*truth : nullptr);

  auto rep = metric_report_to_json(ev.report);
  rep["seed"] = cfg.seed;
  rep["created"] = now_iso(g);
  rep["draws"] = cfg.draws;
  rep["checkpoint_hash"] = content_hash(read_file(a.checkpoint));
  write_out(a.report, rep.dump(2) + "\n");
  write_out(a.scatter, header_line("evaluate", cfg, g) + scatter_to_csv(ev.truth, ev.predicted, ev.salinity));
  std::cout << "evaluate (" << ev.report.split << ", vs " << ev.report.reference << "): n " << ev.report.n << ", R2 "
            << ev.report.r2 << ", RMSE " << ev.report.rmse << " mg/L -> " << a.report << "\n";
  if (!ev.report.warning.empty()) std::cerr << "warning: " << ev.report.warning << "\n";
  return 0;
}

// ----------------------------------------------------------------- cycles

struct CyclesArgs {
  std::string series;
  std::string column;
  std::string out = "periodogram.csv";
};

int cmd_cycles(const Globals& g, const CyclesArgs& a) {
  KvConfig kv;
  RunConfig cfg = load_config(g, kv);
  const auto s = parse_series_csv(required_file(a.series, "series file"), a.column);
  const auto hours = s.hours();
  const auto res = periodogram(hours, s.values, cfg.periodogram);
  const auto peaks = significant_peaks(res, res.significance);
  std::string head = header_line("cycles", cfg, g);
  head += "# dominant_period_hours=" + format_sig15(res.dominant_period_h) + " power=" + format_sig15(res.dominant_power) +
          " significance=" + format_sig15(res.dominant_fap) + "\n";
  write_out(a.out, head + periodogram_to_csv(res));
  if (peaks.empty()) {
    std::cout << "cycles: no peak below false-alarm level " << res.significance << "\n";
  } else {
    std::cout << "cycles: dominant period " << res.dominant_period_h << " h (power " << res.dominant_power
              << ", false-alarm " << res.dominant_fap << ")\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, peaks.size()); ++i)
      std::cout << "  peak " << peaks[i].period_h << " h, power " << peaks[i].power << ", false-alarm " << peaks[i].fap << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral water-quality retrieval with a conditional diffusion model"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Configuration file (key = value)");
  app.add_option("--seed", g.seed, "Top-level seed; overrides the config");
  app.add_flag("--fixed-timestamp", g.fixed_timestamp, "Write a fixed creation time so outputs are byte-identical");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic estuary campaign");
  simulate->fallthrough();
  simulate->add_option("--out", sim.out_dir, "Output directory")->capture_default_str();
  simulate->add_option("--days", sim.days, "Campaign length in days (overrides estuary.days)");

  IngestArgs ing;
  auto* ingest_cmd = app.add_subcommand("ingest", "Process scans, drift-correct nitrate and pair observations");
  ingest_cmd->fallthrough();
  ingest_cmd->add_option("--dir", ing.dir, "Campaign directory written by simulate");
  ingest_cmd->add_option("--scans", ing.scans, "Scan file (.jsonl or .csv)");
  ingest_cmd->add_option("--nitrate", ing.nitrate, "Nitrate CSV");
  ingest_cmd->add_option("--salinity", ing.salinity, "Salinity CSV");
  ingest_cmd->add_option("--labs", ing.labs, "Lab CSV");
  ingest_cmd->add_option("--truth", ing.truth, "Truth JSONL; attaches TSS and CDOM targets");
  ingest_cmd->add_option("--out", ing.out, "Matched-sample JSONL")->capture_default_str();
  ingest_cmd->add_option("--report", ing.report, "Ingest report JSON (default: beside --out)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit encoder, transforms and the diffusion model");
  train_cmd->fallthrough();
  train_cmd->add_option("--matched", tr.matched, "Matched-sample JSONL")->capture_default_str();
  train_cmd->add_option("--out", tr.out_dir, "Output directory for checkpoint, split and loss history")->capture_default_str();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Posterior mean and spread for new spectra");
  predict->fallthrough();
  predict->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->capture_default_str();
  predict->add_option("--input", pr.input, "JSONL with timestamp, salinity_psu and rrs")->required();
  predict->add_option("--out", pr.out, "Predictions CSV")->capture_default_str();
  predict->add_option("--draws", pr.draws, "Posterior draws per input (default: predict.draws)");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score nitrate predictions on the persisted test split");
  evaluate->fallthrough();
  evaluate->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->capture_default_str();
  evaluate->add_option("--split", ev.split, "Split file (default: split.json beside the checkpoint)");
  evaluate->add_option("--matched", ev.matched, "Matched-sample JSONL used for training")->capture_default_str();
  evaluate->add_option("--truth", ev.truth, "Truth JSONL; score against simulated nitrate instead of in-situ values");
  evaluate->add_option("--report", ev.report, "Metric report JSON")->capture_default_str();
  evaluate->add_option("--scatter", ev.scatter, "Scatter CSV")->capture_default_str();
  evaluate->add_flag("--on-train", ev.on_train, "Score the training split instead (flagged in the report)");

  CyclesArgs cy;
  auto* cycles = app.add_subcommand("cycles", "Least-squares periodogram of a time series");
  cycles->fallthrough();
  cycles->add_option("--series", cy.series, "CSV with timestamp_iso8601 and a value column")->required();
  cycles->add_option("--column", cy.column, "Value column name (default: second column)");
  cycles->add_option("--out", cy.out, "Periodogram CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(g, sim);
    if (*ingest_cmd) return cmd_ingest(g, ing);
    if (*train_cmd) return cmd_train(g, tr);
    if (*predict) return cmd_predict(g, pr);
    if (*evaluate) return cmd_evaluate(g, ev);
    if (*cycles) return cmd_cycles(g, cy);
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
