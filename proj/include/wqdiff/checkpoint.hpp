#pragma once

// Self-describing JSON checkpoint for a RetrievalModel, with content hashes
// that tie it to the training data and the persisted split.

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqdiff/error.hpp"
#include "wqdiff/grid.hpp"
#include "wqdiff/model.hpp"
#include "wqdiff/rng.hpp"

namespace wqdiff {

inline constexpr std::string_view kCheckpointFormat = "wqdiff-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string content_hash(std::string_view bytes) { return hash_hex(fnv1a64(bytes)); }

inline nlohmann::ordered_json training_config_to_json(const TrainingConfig& c) {
  nlohmann::ordered_json j;
  j["steps"] = c.steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["scale_betas"] = c.scale_betas;
  j["hidden"] = c.hidden;
  j["embedding_dim"] = c.embedding_dim;
  j["k"] = c.k;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["min_learning_rate"] = c.min_learning_rate;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["validation_fraction"] = c.validation_fraction;
  j["seed"] = c.seed;
  return j;
}

inline TrainingConfig training_config_from_json(const nlohmann::ordered_json& j) {
  TrainingConfig c;
  c.steps = j.at("steps").get<int>();
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.scale_betas = j.at("scale_betas").get<bool>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.min_learning_rate = j.at("min_learning_rate").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline std::string training_config_hash(const TrainingConfig& c) { return content_hash(training_config_to_json(c).dump()); }

/// Canonical text of a split file; its hash is recorded in the checkpoint.
inline std::string split_file_text(const SplitIndex& s, const std::string& data_hash) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["ratio"] = s.ratio;
  j["n"] = s.train_ids.size() + s.test_ids.size();
  j["data_hash"] = data_hash;
  j["train_ids"] = s.train_ids;
  j["test_ids"] = s.test_ids;
  return j.dump() + "\n";
}

struct CheckpointMeta {
  std::string created;       // ISO 8601
  std::uint64_t seed = 0;    // top-level seed
  std::string data_hash;     // hash of the matched-sample file used for training
  std::string split_hash;    // hash of the split file text
  int best_epoch = 0;
  int epochs_run = 0;
  bool stopped_early = false;
};

namespace detail {

inline nlohmann::ordered_json vec_json(const Eigen::VectorXd& v) {
  return nlohmann::ordered_json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd json_vec(const nlohmann::ordered_json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::ordered_json rows_json(const Eigen::MatrixXd& m) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    out.push_back(row);
  }
  return out;
}

inline Eigen::MatrixXd json_rows(const nlohmann::ordered_json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw IntegrityError("matrix has the wrong number of rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = j[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw IntegrityError("matrix row has the wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace detail

/// Checkpoint text: one JSON object; `checkpoint_hash` covers the compact
/// serialization of every other field, in order.
inline std::string checkpoint_to_string(const RetrievalModel& m, const CheckpointMeta& meta,
                                        const WavelengthGrid& grid = default_grid()) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["created"] = meta.created;
  j["seed"] = meta.seed;
  j["config"] = training_config_to_json(m.config);
  j["config_hash"] = training_config_hash(m.config);
  j["data_hash"] = meta.data_hash;
  j["split_hash"] = meta.split_hash;
  j["grid"] = {{"start_nm", grid.start_nm()}, {"end_nm", grid.end_nm()}, {"step_nm", grid.step_nm()}};

  std::vector<double> betas(m.schedule.betas().begin() + 1, m.schedule.betas().end());
  j["schedule"] = {{"steps", m.schedule.steps()}, {"betas", betas}};

  const auto& e = m.encoder;
  nlohmann::ordered_json enc;
  enc["requested_k"] = e.requested_k;
  enc["k"] = e.k();
  enc["band_mean"] = detail::vec_json(e.band_mean);
  enc["band_std"] = detail::vec_json(e.band_std);
  enc["components"] = detail::rows_json(e.components.transpose());
  enc["eigenvalues"] = detail::vec_json(e.eigenvalues);
  enc["salinity_mean"] = e.salinity_mean;
  enc["salinity_std"] = e.salinity_std;
  enc["warning"] = e.warning;
  j["encoder"] = enc;

  const auto& t = m.transform;
  j["transform"] = {{"log", t.log}, {"shift", t.shift}, {"mean", t.mean}, {"stddev", t.stddev}};

  const auto& d = m.denoiser;
  nlohmann::ordered_json net;
  net["activation"] = "silu";
  net["condition_dim"] = d.condition_dim();
  net["embedding_dim"] = d.embedding_dim();
  net["hidden"] = d.hidden();
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : d.layers()) {
    nlohmann::ordered_json lj;
    lj["in"] = l.weight.cols();
    lj["out"] = l.weight.rows();
    lj["weight"] = detail::rows_json(l.weight);
    lj["bias"] = detail::vec_json(l.bias);
    layers.push_back(lj);
  }
  net["layers"] = layers;
  j["network"] = net;

  j["training"] = {{"best_epoch", meta.best_epoch}, {"epochs_run", meta.epochs_run}, {"stopped_early", meta.stopped_early}};
  j["checkpoint_hash"] = content_hash(j.dump());
  return j.dump() + "\n";
}

struct LoadedCheckpoint {
  RetrievalModel model;
  CheckpointMeta meta;
  std::string config_hash;
};

/// Parses and verifies a checkpoint. Any hash mismatch, structural damage or
/// unknown format raises IntegrityError.
inline LoadedCheckpoint checkpoint_from_string(std::string_view text, const WavelengthGrid& grid = default_grid()) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw IntegrityError(std::string("checkpoint is not valid JSON: ") + ex.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat) throw IntegrityError("not a wqdiff checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw IntegrityError("unsupported checkpoint version " + j.at("version").dump());
    const auto stored = j.at("checkpoint_hash").get<std::string>();
    nlohmann::ordered_json body = j;
    body.erase("checkpoint_hash");
    if (content_hash(body.dump()) != stored) throw IntegrityError("checkpoint hash mismatch (file modified?)");

    LoadedCheckpoint out;
    auto& m = out.model;
    m.config = training_config_from_json(j.at("config"));
    out.config_hash = j.at("config_hash").get<std::string>();
    if (training_config_hash(m.config) != out.config_hash) throw IntegrityError("config hash mismatch");
    const auto& g = j.at("grid");
    if (g.at("start_nm").get<double>() != grid.start_nm() || g.at("end_nm").get<double>() != grid.end_nm() ||
        g.at("step_nm").get<double>() != grid.step_nm())
      throw GridMismatch("checkpoint was trained on a different wavelength grid");

    m.schedule = NoiseSchedule(j.at("schedule").at("betas").get<std::vector<double>>());

    const auto& enc = j.at("encoder");
    auto& e = m.encoder;
    e.requested_k = enc.at("requested_k").get<std::size_t>();
    e.band_mean = detail::json_vec(enc.at("band_mean"));
    e.band_std = detail::json_vec(enc.at("band_std"));
    const auto k = static_cast<Eigen::Index>(enc.at("k").get<std::size_t>());
    e.components = detail::json_rows(enc.at("components"), k, e.band_mean.size()).transpose();
    e.eigenvalues = detail::json_vec(enc.at("eigenvalues"));
    e.salinity_mean = enc.at("salinity_mean").get<double>();
    e.salinity_std = enc.at("salinity_std").get<double>();
    e.warning = enc.at("warning").get<std::string>();
    if (e.band_std.size() != e.band_mean.size() || static_cast<std::size_t>(e.band_mean.size()) != grid.count())
      throw IntegrityError("encoder band statistics do not match the grid");
    e.fitted = true;

    const auto& t = j.at("transform");
    m.transform.log = t.at("log").get<bool>();
    m.transform.shift = t.at("shift").get<TargetTransform::Vec>();
    m.transform.mean = t.at("mean").get<TargetTransform::Vec>();
    m.transform.stddev = t.at("stddev").get<TargetTransform::Vec>();

    const auto& net = j.at("network");
    if (net.at("activation").get<std::string>() != "silu") throw IntegrityError("unsupported activation");
    m.denoiser = Denoiser(net.at("condition_dim").get<std::size_t>(), net.at("hidden").get<std::vector<std::size_t>>(),
                          net.at("embedding_dim").get<std::size_t>(), 0);
    if (m.denoiser.condition_dim() != e.condition_dim()) throw IntegrityError("network and encoder disagree on condition size");
    auto& layers = m.denoiser.layers();
    const auto& lj = net.at("layers");
    if (lj.size() != layers.size()) throw IntegrityError("network layer count does not match its architecture");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight = detail::json_rows(lj[i].at("weight"), layers[i].weight.rows(), layers[i].weight.cols());
      layers[i].bias = detail::json_vec(lj[i].at("bias"));
      if (layers[i].bias.size() != layers[i].weight.rows()) throw IntegrityError("bias length mismatch");
    }
    if (!m.denoiser.all_finite()) throw IntegrityError("non-finite network parameters");

    out.meta.created = j.at("created").get<std::string>();
    out.meta.seed = j.at("seed").get<std::uint64_t>();
    out.meta.data_hash = j.at("data_hash").get<std::string>();
    out.meta.split_hash = j.at("split_hash").get<std::string>();
    const auto& tr = j.at("training");
    out.meta.best_epoch = tr.at("best_epoch").get<int>();
    out.meta.epochs_run = tr.at("epochs_run").get<int>();
    out.meta.stopped_early = tr.at("stopped_early").get<bool>();
    return out;
  } catch (const nlohmann::json::exception& ex) {
    throw IntegrityError(std::string("malformed checkpoint: ") + ex.what());
  } catch (const ConfigError& ex) {
    throw IntegrityError(std::string("checkpoint holds an invalid model: ") + ex.what());
  }
}

}  // namespace wqdiff
