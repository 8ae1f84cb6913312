#pragma once

// Optimizers, the per-station training loop and the multi-station registry.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/features.hpp"
#include "deepdust/ingest.hpp"
#include "deepdust/loss.hpp"
#include "deepdust/net.hpp"

namespace deepdust {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  int early_stop_patience = 0;  // 0 disables early stopping
  int window = kDefaultWindow;
  int hidden = 42;
  double train_frac = 0.7;
  double val_frac = 0.15;
  ScalerPooling pooling = ScalerPooling::kPerType;
  std::vector<int> stations;  // empty: the caller's default station list

  void validate() const {
    if (epochs < 1) throw argument_error("epochs must be >= 1");
    if (batch_size < 1) throw argument_error("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw argument_error("learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw argument_error("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw argument_error("adam_eps must be > 0");
    if (early_stop_patience < 0) throw argument_error("early_stop_patience must be >= 0");
    if (window < 1) throw argument_error("window must be >= 1");
    if (hidden < 1) throw argument_error("hidden must be >= 1");
    plan_split(1000000, train_frac, val_frac);
    for (int s : stations) check_station(s);
  }
};

inline std::vector<int> parse_station_list(std::string_view text) {
  std::vector<int> out;
  for (auto field : detail::split_csv(text)) {
    field = detail::trim(field);
    if (field.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
      throw argument_error("malformed station id '" + std::string(field) + "'");
    }
    check_station(v);
    out.push_back(v);
  }
  return out;
}

// Applies one "key = value" setting. Unknown keys are rejected.
inline void apply_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  auto bad = [&]() -> Error {
    return argument_error("config: invalid value '" + std::string(value) + "' for '" + std::string(key) + "'");
  };
  auto as_int = [&]() {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) throw bad();
    return v;
  };
  auto as_real = [&]() {
    auto v = detail::parse_value(value);
    if (!v) throw bad();
    return *v;
  };
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);

  if (key == "epochs") cfg.epochs = static_cast<int>(as_int());
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(as_int());
  else if (key == "learning_rate") cfg.learning_rate = as_real();
  else if (key == "optimizer") {
    if (value == "adam") cfg.optimizer = OptimizerKind::kAdam;
    else if (value == "sgd") cfg.optimizer = OptimizerKind::kSgd;
    else throw bad();
  } else if (key == "beta1") cfg.beta1 = as_real();
  else if (key == "beta2") cfg.beta2 = as_real();
  else if (key == "adam_eps") cfg.adam_eps = as_real();
  else if (key == "seed") {
    auto v = as_int();
    if (v < 0) throw bad();
    cfg.seed = static_cast<std::uint64_t>(v);
  } else if (key == "early_stop_patience") cfg.early_stop_patience = static_cast<int>(as_int());
  else if (key == "window") cfg.window = static_cast<int>(as_int());
  else if (key == "hidden") cfg.hidden = static_cast<int>(as_int());
  else if (key == "train_frac") cfg.train_frac = as_real();
  else if (key == "val_frac") cfg.val_frac = as_real();
  else if (key == "scaler") cfg.pooling = parse_pooling(value);
  else if (key == "stations") {
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    cfg.stations = parse_station_list(value);
  } else {
    throw argument_error("config: unknown key '" + std::string(key) + "'");
  }
}

// Flat "key = value" lines; '#' starts a comment. A TOML subset.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    auto view = detail::trim(std::string_view(line).substr(0, hash));
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw argument_error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_config_value(cfg, detail::trim(view.substr(0, eq)), detail::trim(view.substr(eq + 1)));
  }
  return cfg;
}

inline TrainConfig load_config(const std::string& path, TrainConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw argument_error("cannot open config '" + path + "'");
  return parse_config(in, cfg);
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update; `state.step` is incremented first, so the
// first call uses t = 1. Each scalar is updated independently.
template <typename Scalar>
void adam_step(std::span<Scalar> params, std::span<const Scalar> grads, AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw argument_error("adam_step: shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw argument_error("adam_step: moment shape mismatch");
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= static_cast<Scalar>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps));
  }
}

template <typename Scalar>
void sgd_step(std::span<Scalar> params, std::span<const Scalar> grads, double learning_rate) {
  if (params.size() != grads.size()) throw argument_error("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= static_cast<Scalar>(learning_rate * grads[i]);
}

// Tracks the best validation loss; should_stop() after `patience`
// consecutive non-improving epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when this epoch improved on the best loss so far.
  bool update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return patience_ > 0 && stale_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainReport {
  int station_id = 0;
  std::vector<double> train_loss;  // mean per-sample loss seen during each epoch
  std::vector<double> val_loss;
  int best_epoch = 0;              // 1-based
  double best_val_mse = 0;
  double seconds = 0;

  int epochs_run() const { return static_cast<int>(train_loss.size()); }
};

template <typename Scalar = double>
struct TrainResult {
  LstmModel<Scalar> model;
  TrainReport report;
};

// SplitMix64 finalizer; derives independent streams from (seed, station, purpose).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename Scalar>
double dataset_loss(const LstmModel<Scalar>& model, const WindowedDataset& ds) {
  if (ds.empty()) return 0;
  ForwardCache<Scalar> cache;
  double sum = 0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto y = ds.target(k);
    const auto y_hat = model_forward(model, ds.input(k), cache);
    sum += static_cast<double>(mse_loss<Scalar>(y_hat, {static_cast<Scalar>(y.pm10), static_cast<Scalar>(y.pm25)}));
  }
  return sum / static_cast<double>(ds.size());
}

// Mini-batch training on one station's windows. Parameters are initialized
// from mix_seed(seed, station), batches are reshuffled every epoch from an
// independent stream, and the parameters with the lowest validation loss are
// returned.
template <typename Scalar = double>
TrainResult<Scalar> train_station(const WindowedDataset& train, const WindowedDataset& val, int station_id,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty() || val.empty()) throw data_error("train_station: empty train or validation split");
  const auto started = std::chrono::steady_clock::now();

  ModelShape shape;
  shape.input_dim = train.feature_dim();
  shape.hidden = cfg.hidden;
  auto model = init_params<Scalar>(mix_seed(cfg.seed, static_cast<std::uint64_t>(station_id)), shape);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(station_id), 1));

  TrainResult<Scalar> result{model, {}};
  result.report.station_id = station_id;
  EarlyStopper stopper(cfg.early_stop_patience);
  AdamState adam;
  Gradients<Scalar> grads(shape);
  ForwardCache<Scalar> cache;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const auto inv_batch = Scalar(1) / static_cast<Scalar>(end - begin);
      grads.set_zero();
      for (std::size_t i = begin; i < end; ++i) {
        const auto k = order[i];
        const auto t = train.target(k);
        const std::array<Scalar, 2> y{static_cast<Scalar>(t.pm10), static_cast<Scalar>(t.pm25)};
        const auto y_hat = model_forward(model, train.input(k), cache);
        const Scalar loss = (y_hat[0] - y[0]) * (y_hat[0] - y[0]) + (y_hat[1] - y[1]) * (y_hat[1] - y[1]);
        if (!std::isfinite(loss)) {
          throw divergence_error("station " + std::to_string(station_id) + ": non-finite loss at epoch " +
                                 std::to_string(epoch) + ", sample " + std::to_string(k) +
                                 " (learning_rate=" + format_value(cfg.learning_rate) + ")");
        }
        epoch_loss += static_cast<double>(loss);
        auto g = mse_loss_grad(y_hat, y);
        model_backward_accumulate(model, cache, {g[0] * inv_batch, g[1] * inv_batch}, grads);
      }
      if (cfg.optimizer == OptimizerKind::kAdam) {
        adam_step<Scalar>(model.values(), grads.values(), adam, cfg);
      } else {
        sgd_step<Scalar>(model.values(), grads.values(), cfg.learning_rate);
      }
    }
    const double train_loss = epoch_loss / static_cast<double>(order.size());
    const double val_loss = dataset_loss(model, val);
    if (!std::isfinite(val_loss) || !model.all_finite()) {
      throw divergence_error("station " + std::to_string(station_id) + ": non-finite parameters or validation loss at epoch " +
                             std::to_string(epoch));
    }
    result.report.train_loss.push_back(train_loss);
    result.report.val_loss.push_back(val_loss);
    if (stopper.update(val_loss)) result.model = model;
    if (stopper.should_stop()) break;
  }
  result.report.best_epoch = stopper.best_epoch();
  result.report.best_val_mse = stopper.best();
  result.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// Everything derived from one raw table for one target station.
struct PreparedStation {
  Scaler scaler;
  std::shared_ptr<const FeatureMatrix> features;
  DatasetSplit split;
};

// Imputes, fits the scaler on the hours touched by the training partition
// only, transforms, windows and splits chronologically.
inline PreparedStation prepare_station(const ObservationTable& raw, int station_id, const TrainConfig& cfg,
                                       const std::optional<Scaler>& fitted = std::nullopt) {
  check_station(station_id);
  const auto table = impute_missing(raw);
  const auto fit_rows = training_rows(table.rows, cfg.window, cfg.train_frac, cfg.val_frac);
  PreparedStation out;
  out.scaler = fitted ? *fitted : fit_scaler(table, 0, fit_rows, cfg.pooling);
  out.features = std::make_shared<const FeatureMatrix>(transform(out.scaler, table));
  out.split = split_dataset(make_windows(out.features, station_id, cfg.window), cfg.train_frac, cfg.val_frac);
  return out;
}

struct StationJob {
  int station_id = 0;
  std::shared_ptr<const ObservationTable> table;  // aligned, possibly with gaps
};

struct RegistryEntry {
  int station_id = 0;
  std::string checkpoint;  // relative to the registry directory
  std::string scaler;
  TrainReport report;
};

struct ModelRegistry {
  std::map<int, RegistryEntry> entries;
  std::map<int, std::string> failures;
  std::map<int, LstmModel<double>> models;
  bool any_divergence = false;
};

inline std::string station_file_stem(int station_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "station_%02d", station_id);
  return buf;
}

// Trains every job on up to `threads` workers. A failing station is recorded
// in `failures` and the remaining stations continue. When `out_dir` is set,
// checkpoints and scalers are written there. Results do not depend on the
// thread count or job order.
inline ModelRegistry train_all(const std::vector<StationJob>& jobs, const TrainConfig& cfg,
                               const std::optional<std::filesystem::path>& out_dir = std::nullopt, int threads = 1) {
  cfg.validate();
  {
    std::vector<int> ids;
    for (const auto& j : jobs) ids.push_back(j.station_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw argument_error("train_all: duplicate station id in job list");
    }
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);

  ModelRegistry registry;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      try {
        if (!job.table) throw data_error("no table for station");
        auto prepared = prepare_station(*job.table, job.station_id, cfg);
        auto result = train_station<double>(prepared.split.train, prepared.split.val, job.station_id, cfg);
        RegistryEntry entry{job.station_id, "", "", result.report};
        if (out_dir) {
          const auto stem = station_file_stem(job.station_id);
          entry.checkpoint = stem + ".ckpt";
          entry.scaler = stem + ".scaler";
          save_checkpoint((*out_dir / entry.checkpoint).string(), result.model);
          save_scaler((*out_dir / entry.scaler).string(), prepared.scaler);
        }
        std::lock_guard lock(mutex);
        registry.entries.emplace(job.station_id, std::move(entry));
        registry.models.emplace(job.station_id, std::move(result.model));
      } catch (const Error& e) {
        std::lock_guard lock(mutex);
        registry.failures.emplace(job.station_id, e.what());
        if (e.kind() == ErrorKind::kDivergence) registry.any_divergence = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        registry.failures.emplace(job.station_id, e.what());
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, threads));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, jobs.size()); ++t) pool.emplace_back(worker);
  }
  return registry;
}

// Where the training data came from, so eval/predict can rebuild the splits.
struct DataSource {
  std::string pollutants;
  std::string climate;
  std::optional<Hour> start;
  std::optional<Hour> end;
  int utc_offset = 0;
};

struct ManifestRecord {
  int station_id = 0;
  std::string checkpoint;
  std::string scaler;
  double best_val_mse = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  int window = kDefaultWindow;
  double train_frac = 0.7;
  double val_frac = 0.15;
  DataSource source;
};

inline nlohmann::ordered_json to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["station_id"] = r.station_id;
  j["checkpoint"] = r.checkpoint;
  j["scaler"] = r.scaler;
  j["best_val_mse"] = r.best_val_mse;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["window"] = r.window;
  j["train_frac"] = r.train_frac;
  j["val_frac"] = r.val_frac;
  j["pollutants"] = r.source.pollutants;
  j["climate"] = r.source.climate;
  j["start"] = r.source.start ? nlohmann::ordered_json(format_hour(*r.source.start)) : nlohmann::ordered_json();
  j["end"] = r.source.end ? nlohmann::ordered_json(format_hour(*r.source.end)) : nlohmann::ordered_json();
  j["utc_offset"] = r.source.utc_offset;
  return j;
}

inline ManifestRecord manifest_record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  try {
    r.station_id = j.at("station_id").get<int>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.scaler = j.at("scaler").get<std::string>();
    r.best_val_mse = j.at("best_val_mse").get<double>();
    r.epochs_run = j.at("epochs_run").get<int>();
    r.best_epoch = j.value("best_epoch", 0);
    r.window = j.value("window", kDefaultWindow);
    r.train_frac = j.value("train_frac", 0.7);
    r.val_frac = j.value("val_frac", 0.15);
    r.source.pollutants = j.value("pollutants", std::string{});
    r.source.climate = j.value("climate", std::string{});
    if (j.contains("start") && j["start"].is_string()) r.source.start = parse_hour(j["start"].get<std::string>());
    if (j.contains("end") && j["end"].is_string()) r.source.end = parse_hour(j["end"].get<std::string>());
    r.source.utc_offset = j.value("utc_offset", 0);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("registry: malformed record: ") + e.what());
  }
  check_station(r.station_id);
  return r;
}

inline std::vector<ManifestRecord> manifest_records(const ModelRegistry& registry, const TrainConfig& cfg,
                                                    const DataSource& source) {
  std::vector<ManifestRecord> out;
  for (const auto& [id, e] : registry.entries) {
    out.push_back({id, e.checkpoint, e.scaler, e.report.best_val_mse, e.report.epochs_run(), e.report.best_epoch,
                   cfg.window, cfg.train_frac, cfg.val_frac, source});
  }
  return out;
}

// JSON lines, ascending station id.
inline void write_manifest(std::ostream& out, std::vector<ManifestRecord> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.station_id < b.station_id; });
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write registry '" + path + "'");
  write_manifest(out, records);
}

inline std::vector<ManifestRecord> read_manifest(std::istream& in) {
  std::vector<ManifestRecord> out;
  std::set<int> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw data_error(std::string("registry: invalid JSON line: ") + e.what());
    }
    auto rec = manifest_record_from_json(j);
    if (!seen.insert(rec.station_id).second) {
      throw data_error("registry: duplicate station " + std::to_string(rec.station_id));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<ManifestRecord> read_manifest(const std::string& path) {
  auto in = detail::open_input(path);
  return read_manifest(in);
}

}  // namespace deepdust
