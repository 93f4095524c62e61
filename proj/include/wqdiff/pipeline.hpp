#pragma once

// Run configuration and the stage functions behind the command-line tool:
// scan processing, ingest, training, evaluation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wqdiff/checkpoint.hpp"
#include "wqdiff/encoder.hpp"
#include "wqdiff/estuary.hpp"
#include "wqdiff/eval.hpp"
#include "wqdiff/ingest.hpp"
#include "wqdiff/kvconfig.hpp"
#include "wqdiff/model.hpp"
#include "wqdiff/scan_io.hpp"
#include "wqdiff/spectral.hpp"

namespace wqdiff {

/// Everything a subcommand needs besides file paths. One top-level seed
/// feeds every random stream: stream `name` gets derive_seed(seed, name)
/// with names "simulate", "split", "train" and "predict".
struct RunConfig {
  std::uint64_t seed = 42;

  double rho = kDefaultSkylightFactor;
  QcThresholds qc;
  std::string brdf_lut_path;  // empty: identity table
  ViewGeometry brdf_reference;

  std::int64_t pair_window_s = kDefaultPairingWindow;
  std::int64_t lab_window_s = 30 * kMinute;
  bool drift_correction = true;

  double split_ratio = 0.7;
  TrainingConfig training;
  RankPolicy rank_policy = RankPolicy::Reduce;

  std::size_t draws = 64;
  unsigned threads = 1;
  std::vector<double> salinity_edges = default_salinity_edges();

  PeriodogramOptions periodogram;
  EstuaryConfig estuary;

  std::uint64_t stream_seed(std::string_view name) const { return derive_seed(seed, name); }

  /// Applies the top-level seed to the derived streams.
  void apply_seed(std::uint64_t s) {
    seed = s;
    estuary.seed = stream_seed("simulate");
    training.seed = stream_seed("train");
  }
};

inline RankPolicy parse_rank_policy(const std::string& s) {
  if (s == "reduce") return RankPolicy::Reduce;
  if (s == "keep") return RankPolicy::Keep;
  if (s == "throw") return RankPolicy::Throw;
  throw ConfigError("train.rank_policy must be reduce, keep or throw");
}

/// Reads a RunConfig from flat key = value text; see docs/config.md. Keys
/// under `estuary.` configure the simulator.
inline RunConfig run_config_from_kv(const KvConfig& kv) {
  RunConfig c;
  const auto seed = kv.get_int("seed", 42);
  if (seed < 0) throw ConfigError("seed must be >= 0");
  const auto nonneg = [&](const char* key, long long fallback) {
    const auto v = kv.get_int(key, fallback);
    if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  };

  c.rho = kv.get_double("spectral.rho", c.rho);
  if (!(c.rho >= 0 && c.rho <= 0.1)) throw ConfigError("spectral.rho must lie in [0, 0.1]");
  c.brdf_lut_path = kv.get_string("spectral.brdf_lut", c.brdf_lut_path);
  c.qc.max_negative_fraction = kv.get_double("qc.max_negative_fraction", c.qc.max_negative_fraction);
  c.qc.spike_factor = kv.get_double("qc.spike_factor", c.qc.spike_factor);
  c.qc.rrs_ceiling = kv.get_double("qc.rrs_ceiling", c.qc.rrs_ceiling);
  c.qc.min_ed = kv.get_double("qc.min_ed", c.qc.min_ed);
  c.qc.saturation_level = kv.get_double("qc.saturation_level", c.qc.saturation_level);
  c.qc.spike_half_window = nonneg("qc.spike_half_window", static_cast<long long>(c.qc.spike_half_window));
  c.qc.spike_floor = kv.get_double("qc.spike_floor", c.qc.spike_floor);

  c.pair_window_s = kv.get_int("ingest.pair_window_s", c.pair_window_s);
  c.lab_window_s = kv.get_int("ingest.lab_window_s", c.lab_window_s);
  c.drift_correction = kv.get_bool("ingest.drift_correction", c.drift_correction);
  if (c.pair_window_s < 0 || c.lab_window_s < 0) throw ConfigError("ingest windows must be >= 0");

  c.split_ratio = kv.get_double("split.ratio", c.split_ratio);
  if (!(c.split_ratio > 0 && c.split_ratio < 1)) throw ConfigError("split.ratio must lie in (0, 1)");

  auto& t = c.training;
  t.steps = static_cast<int>(kv.get_int("train.steps", t.steps));
  t.beta_start = kv.get_double("train.beta_start", t.beta_start);
  t.beta_end = kv.get_double("train.beta_end", t.beta_end);
  t.scale_betas = kv.get_bool("train.scale_betas", t.scale_betas);
  std::vector<double> hidden(t.hidden.begin(), t.hidden.end());
  hidden = kv.get_doubles("train.hidden", hidden);
  t.hidden.clear();
  for (double h : hidden) {
    if (!(h >= 1) || h != std::floor(h)) throw ConfigError("train.hidden must list positive integers");
    t.hidden.push_back(static_cast<std::size_t>(h));
  }
  t.embedding_dim = nonneg("train.embedding_dim", static_cast<long long>(t.embedding_dim));
  t.k = nonneg("train.k", static_cast<long long>(t.k));
  t.batch_size = nonneg("train.batch_size", static_cast<long long>(t.batch_size));
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.min_learning_rate = kv.get_double("train.min_learning_rate", t.min_learning_rate);
  t.max_epochs = static_cast<int>(kv.get_int("train.max_epochs", t.max_epochs));
  t.patience = static_cast<int>(kv.get_int("train.patience", t.patience));
  t.validation_fraction = kv.get_double("train.validation_fraction", t.validation_fraction);
  c.rank_policy = parse_rank_policy(kv.get_string("train.rank_policy", "reduce"));
  t.validate();

  c.draws = nonneg("predict.draws", static_cast<long long>(c.draws));
  if (c.draws == 0) throw ConfigError("predict.draws must be >= 1");
  c.threads = static_cast<unsigned>(nonneg("predict.threads", c.threads));
  if (c.threads == 0) throw ConfigError("predict.threads must be >= 1");
  c.salinity_edges = kv.get_doubles("eval.salinity_bins", c.salinity_edges);

  c.periodogram.min_period_h = kv.get_double("cycles.min_period_h", c.periodogram.min_period_h);
  c.periodogram.max_period_h = kv.get_double("cycles.max_period_h", c.periodogram.max_period_h);
  c.periodogram.count = nonneg("cycles.periods", static_cast<long long>(c.periodogram.count));
  c.periodogram.significance = kv.get_double("cycles.significance", c.periodogram.significance);

  c.estuary = estuary_config_from_kv(kv.section("estuary"));
  c.apply_seed(static_cast<std::uint64_t>(seed));
  return c;
}

// ------------------------------------------------------------ scan stage

struct ScanReport {
  std::size_t scans = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected;  // reason -> count
};

/// Raw scans -> accepted, geometry-normalized reflectance spectra:
/// assemble channels, scan-level QC, BRF with skylight removal, BRDF
/// normalization, spectrum QC. Scans outside the LUT domain are rejected.
inline std::vector<ReflectanceSpectrum> process_scans(const std::vector<RawScan>& raw, const BrdfLut& lut, double rho,
                                                      const QcThresholds& qc, ScanReport& report,
                                                      const WavelengthGrid& grid = default_grid()) {
  std::vector<ReflectanceSpectrum> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    ++report.scans;
    const RadiometricScan scan = assemble_scan(r, grid);
    QcResult q = quality_filter_scan(scan, qc);
    if (!q.accepted()) {
      for (auto code : q.reasons) ++report.rejected[to_string(code)];
      continue;
    }
    ReflectanceSpectrum spec;
    try {
      spec = brdf_normalize(compute_brf(scan, rho), scan.geometry, lut, grid);
    } catch (const GeometryOutOfRange&) {
      ++report.rejected["GEOMETRY_OUT_OF_RANGE"];
      continue;
    }
    q = quality_filter(spec, qc);
    spec.qc = q;
    if (!q.accepted()) {
      for (auto code : q.reasons) ++report.rejected[to_string(code)];
      continue;
    }
    ++report.accepted;
    out.push_back(std::move(spec));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline BrdfLut load_brdf_lut(const std::string& path, const ViewGeometry& reference = {}) {
  return path.empty() ? BrdfLut::identity() : parse_brdf_lut(read_file(path), reference);
}

// ----------------------------------------------------------- ingest stage

struct IngestResult {
  std::vector<MatchedSample> matched;
  ScanReport scans;
  LoadReport nitrate_load, salinity_load, lab_load;
  std::optional<CalibrationReport> calibration;
  std::size_t nitrate_readings = 0;
  std::size_t truth_attached = 0;
};

/// Looks up the truth record at each sample's nitrate time and attaches
/// the realized TSS and CDOM. Returns how many samples were matched.
inline std::size_t attach_truth(std::vector<MatchedSample>& samples, const std::vector<TruthRecord>& truth) {
  std::map<std::int64_t, const TruthRecord*> by_time;
  for (const auto& r : truth) by_time[r.timestamp.seconds] = &r;
  std::size_t n = 0;
  for (auto& s : samples) {
    const auto it = by_time.find(s.timestamp.seconds);
    if (it == by_time.end()) continue;
    s.tss = it->second->state.tss;
    s.cdom = it->second->state.cdom440;
    ++n;
  }
  return n;
}

inline IngestResult ingest(const std::vector<RawScan>& raw_scans, std::string_view nitrate_csv, std::string_view salinity_csv,
                           std::string_view lab_csv, const std::vector<TruthRecord>* truth, const RunConfig& cfg,
                           const WavelengthGrid& grid = default_grid()) {
  IngestResult res;
  const BrdfLut lut = load_brdf_lut(cfg.brdf_lut_path, cfg.brdf_reference);
  const auto spectra = process_scans(raw_scans, lut, cfg.rho, cfg.qc, res.scans, grid);
  auto nitrate = parse_nitrate_csv(nitrate_csv, res.nitrate_load);
  const auto salinity = parse_salinity_csv(salinity_csv, res.salinity_load);
  res.nitrate_readings = nitrate.size();
  if (cfg.drift_correction) {
    const auto labs = parse_lab_csv(lab_csv, res.lab_load);
    auto cal = drift_calibrate(nitrate, labs, cfg.lab_window_s);
    nitrate = std::move(cal.readings);
    res.calibration = cal.report;
  }
  res.matched = pair_observations(spectra, nitrate, salinity, cfg.pair_window_s);
  if (truth) res.truth_attached = attach_truth(res.matched, *truth);
  return res;
}

// -------------------------------------------------------------- train stage

struct TrainOutputs {
  std::string checkpoint;    // file text
  std::string split;         // file text
  std::string loss_history;  // CSV text
  FitResult fit;
};

inline std::vector<MatchedSample> select(const std::vector<MatchedSample>& all, const std::vector<std::size_t>& ids) {
  std::vector<MatchedSample> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(all.at(i));
  return out;
}

inline std::string loss_history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,train_loss,validation_loss,learning_rate\n";
  for (const auto& e : h)
    out += std::to_string(e.epoch) + "," + format_sig15(e.train_loss) + "," + format_sig15(e.validation_loss) + "," +
           format_sig15(e.learning_rate) + "\n";
  return out;
}

/// Splits `samples` (read from a file whose bytes hash to `data_hash`),
/// fits on the training part, and renders the checkpoint, split and loss
/// history files.
inline TrainOutputs train_pipeline(const std::vector<MatchedSample>& samples, const std::string& data_hash,
                                   const RunConfig& cfg, const std::string& created) {
  TrainOutputs out;
  const auto split = split_train_test(samples.size(), cfg.split_ratio, cfg.stream_seed("split"));
  out.split = split_file_text(split, data_hash);
  out.fit = fit_retrieval_model(select(samples, split.train_ids), cfg.training, cfg.rank_policy);
  CheckpointMeta meta;
  meta.created = created;
  meta.seed = cfg.seed;
  meta.data_hash = data_hash;
  meta.split_hash = content_hash(out.split);
  meta.best_epoch = out.fit.best_epoch;
  meta.epochs_run = out.fit.history.empty() ? 0 : out.fit.history.back().epoch;
  meta.stopped_early = out.fit.stopped_early;
  out.checkpoint = checkpoint_to_string(out.fit.model, meta);
  out.loss_history = loss_history_csv(out.fit.history);
  return out;
}

// ----------------------------------------------------------- evaluate stage

struct SplitFile {
  SplitIndex split;
  std::size_t n = 0;
  std::string data_hash;
};

inline SplitFile parse_split_file(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SplitFile f;
    f.split = split_from_json(j);
    f.n = j.at("n").get<std::size_t>();
    f.data_hash = j.at("data_hash").get<std::string>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed split file: ") + e.what());
  }
}

struct Evaluation {
  MetricReport report;
  std::vector<double> truth, predicted, salinity;
  std::vector<PointPrediction> predictions;
};

/// Checks that checkpoint, split and data belong together (IntegrityError
/// otherwise), predicts the chosen split and scores nitrate against the
/// matched in-situ values, or against the simulator's realized nitrate when
/// `truth` is given.
inline Evaluation evaluate_pipeline(const LoadedCheckpoint& ckpt, std::string_view split_text,
                                    const std::vector<MatchedSample>& samples, const std::string& data_hash,
                                    const RunConfig& cfg, bool on_training_split = false,
                                    const std::vector<TruthRecord>* truth = nullptr) {
  if (content_hash(split_text) != ckpt.meta.split_hash)
    throw IntegrityError("split file does not match the checkpoint (split hash mismatch)");
  const auto split = parse_split_file(split_text);
  if (split.data_hash != ckpt.meta.data_hash || data_hash != ckpt.meta.data_hash)
    throw IntegrityError("matched-sample file differs from the one the checkpoint was trained on");
  if (split.n != samples.size()) throw IntegrityError("split covers a different number of samples");

  const auto& ids = on_training_split ? split.split.train_ids : split.split.test_ids;
  std::map<std::int64_t, double> truth_nitrate;
  if (truth)
    for (const auto& r : *truth) truth_nitrate[r.timestamp.seconds] = r.state.nitrate;
  Evaluation ev;
  std::vector<std::vector<double>> rrs;
  for (auto i : ids) {
    const auto& s = samples.at(i);
    rrs.push_back(s.rrs);
    ev.salinity.push_back(s.salinity);
    if (truth) {
      const auto it = truth_nitrate.find(s.timestamp.seconds);
      if (it == truth_nitrate.end()) throw InputError("truth file has no record at " + format_iso8601(s.timestamp));
      ev.truth.push_back(it->second);
    } else {
      ev.truth.push_back(s.nitrate);
    }
  }
  SamplingOptions opt;
  opt.draws = cfg.draws;
  opt.seed = cfg.stream_seed("predict");
  opt.threads = cfg.threads;
  ev.predictions = predict_batch(ckpt.model, rrs, ev.salinity, opt);
  for (const auto& p : ev.predictions) ev.predicted.push_back(p.mean[0]);
  ev.report = metric_report(ev.truth, ev.predicted, ev.salinity, cfg.salinity_edges);
  if (truth) ev.report.reference = "truth";
  if (on_training_split) {
    ev.report.split = "train";
    ev.report.warning = "evaluated on the training split; not an independent accuracy estimate";
  }
  return ev;
}

// ------------------------------------------------------------ predict stage

struct ConditionRecord {
  UtcTime timestamp;
  double salinity = 0.0;
  std::vector<double> rrs;
};

/// Prediction inputs: JSON lines with timestamp, salinity_psu and rrs. Any
/// matched-sample file qualifies; target fields are ignored.
inline std::vector<ConditionRecord> parse_conditions_jsonl(std::string_view text, std::size_t bands = default_grid().count()) {
  std::vector<ConditionRecord> out;
  for_each_data_line(text, [&](std::size_t row, std::string_view line) {
    try {
      const auto j = nlohmann::json::parse(line);
      ConditionRecord c;
      c.timestamp = detail::field_time(row, j.at("timestamp").get<std::string>());
      c.salinity = j.at("salinity_psu").get<double>();
      c.rrs = j.at("rrs").get<std::vector<double>>();
      if (c.rrs.size() != bands)
        throw SchemaError(row, "rrs has " + std::to_string(c.rrs.size()) + " bands, expected " + std::to_string(bands));
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(row, e.what());
    }
  });
  return out;
}

inline std::string predictions_to_csv(const std::vector<ConditionRecord>& in, const std::vector<PointPrediction>& p) {
  std::string out =
      "timestamp_iso8601,salinity_psu,nitrate_mean,nitrate_std,tss_mean,tss_std,cdom440_mean,cdom440_std,std_defined\n";
  for (std::size_t i = 0; i < in.size(); ++i) {
    out += format_iso8601(in[i].timestamp) + "," + format_sig15(in[i].salinity);
    for (std::size_t d = 0; d < 3; ++d) out += "," + format_sig15(p[i].mean[d]) + "," + format_sig15(p[i].stddev[d]);
    out += p[i].stddev_defined ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace wqdiff
