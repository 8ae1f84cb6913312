#pragma once

// Min-max scaling, feature/target assembly and 48-hour windowing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/hour.hpp"
#include "deepdust/ingest.hpp"

namespace deepdust {

inline constexpr int kDefaultWindow = 48;
inline constexpr int kNumVariableTypes = kNumPollutants + kNumClimate;  // 15

// kPerType pools one min/max over all stations for each of the 15 variable
// types; kPerColumn keeps a separate min/max for each of the 243 columns.
enum class ScalerPooling { kPerType, kPerColumn };

struct ScalerEntry {
  double min = 0;
  double max = 0;

  bool degenerate() const { return max == min; }
  friend bool operator==(const ScalerEntry&, const ScalerEntry&) = default;
};

inline int variable_type(int col) {
  return col < kClimateOffset ? col % kNumPollutants : kNumPollutants + (col - kClimateOffset);
}

inline std::string variable_type_name(int type) {
  return std::string(type < kNumPollutants ? kPollutantNames[type] : kClimateNames[type - kNumPollutants]);
}

class Scaler {
 public:
  Scaler() = default;
  Scaler(ScalerPooling pooling, std::vector<ScalerEntry> entries) : pooling_(pooling), entries_(std::move(entries)) {
    const std::size_t expected = pooling_ == ScalerPooling::kPerType ? kNumVariableTypes : kFeatureDim;
    if (entries_.size() != expected) throw data_error("scaler: wrong number of entries");
    for (const auto& e : entries_) {
      if (!(e.max >= e.min) || !std::isfinite(e.min) || !std::isfinite(e.max)) {
        throw data_error("scaler: entry with max < min or non-finite bounds");
      }
    }
  }

  ScalerPooling pooling() const { return pooling_; }
  const std::vector<ScalerEntry>& entries() const { return entries_; }
  bool fitted() const { return !entries_.empty(); }

  std::size_t entry_index(int col) const {
    return pooling_ == ScalerPooling::kPerType ? static_cast<std::size_t>(variable_type(col))
                                               : static_cast<std::size_t>(col);
  }
  const ScalerEntry& entry(int col) const { return entries_.at(entry_index(col)); }

  std::string entry_name(std::size_t index) const {
    return pooling_ == ScalerPooling::kPerType ? variable_type_name(static_cast<int>(index))
                                               : column_name(static_cast<int>(index));
  }

  // (v - min) / (max - min) without clamping; degenerate entries map to 0.
  double scale(int col, double v) const {
    const auto& e = entry(col);
    return e.degenerate() ? 0.0 : (v - e.min) / (e.max - e.min);
  }

  double normalize(int col, double v) const { return std::clamp(scale(col, v), 0.0, 1.0); }

  double denormalize(int col, double y) const {
    const auto& e = entry(col);
    if (e.degenerate()) {
      throw data_error("scaler: cannot invert degenerate variable '" + entry_name(entry_index(col)) + "'");
    }
    return e.min + y * (e.max - e.min);
  }

  friend bool operator==(const Scaler&, const Scaler&) = default;

 private:
  ScalerPooling pooling_ = ScalerPooling::kPerType;
  std::vector<ScalerEntry> entries_;
};

// Fits on rows [row_begin, row_end) of a fully imputed table. Wind direction is
// a categorical sector and always spans the fixed range [0, 15].
inline Scaler fit_scaler(const ObservationTable& table, std::size_t row_begin, std::size_t row_end,
                         ScalerPooling pooling = ScalerPooling::kPerType) {
  if (table.rows == 0 || row_begin >= row_end || row_end > table.rows) {
    throw data_error("fit_scaler: empty or out-of-range row span");
  }
  const std::size_t n_entries = pooling == ScalerPooling::kPerType ? kNumVariableTypes : kFeatureDim;
  std::vector<ScalerEntry> entries(n_entries, ScalerEntry{std::numeric_limits<double>::infinity(),
                                                          -std::numeric_limits<double>::infinity()});
  Scaler layout(pooling, std::vector<ScalerEntry>(n_entries));
  for (std::size_t r = row_begin; r < row_end; ++r) {
    for (int col = 0; col < kFeatureDim; ++col) {
      const double v = table.at(r, col);
      if (std::isnan(v)) throw data_error("fit_scaler: table has missing cells; impute first");
      auto& e = entries[layout.entry_index(col)];
      e.min = std::min(e.min, v);
      e.max = std::max(e.max, v);
    }
  }
  const ScalerEntry wind{0.0, static_cast<double>(kNumWindSectors - 1)};
  for (std::size_t i = 0; i < n_entries; ++i) {
    const bool is_wind = pooling == ScalerPooling::kPerType
                             ? i == static_cast<std::size_t>(kNumPollutants + kWindDirection)
                             : i == static_cast<std::size_t>(climate_column(kWindDirection));
    if (is_wind) entries[i] = wind;
  }
  return Scaler(pooling, std::move(entries));
}

inline Scaler fit_scaler(const ObservationTable& table, ScalerPooling pooling = ScalerPooling::kPerType) {
  return fit_scaler(table, 0, table.rows, pooling);
}

inline const char* pooling_name(ScalerPooling p) { return p == ScalerPooling::kPerType ? "per_type" : "per_column"; }

inline ScalerPooling parse_pooling(std::string_view s) {
  if (s == "per_type") return ScalerPooling::kPerType;
  if (s == "per_column") return ScalerPooling::kPerColumn;
  throw argument_error("unknown scaler pooling '" + std::string(s) + "' (expected per_type or per_column)");
}

// Flat key-value text: one "name = min,max" line per entry.
inline void save_scaler(std::ostream& out, const Scaler& scaler) {
  out << "# deepdust scaler v1\n";
  out << "pooling = " << pooling_name(scaler.pooling()) << '\n';
  for (std::size_t i = 0; i < scaler.entries().size(); ++i) {
    const auto& e = scaler.entries()[i];
    out << scaler.entry_name(i) << " = " << format_value(e.min) << ',' << format_value(e.max) << '\n';
  }
}

inline void save_scaler(const std::string& path, const Scaler& scaler) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write scaler '" + path + "'");
  save_scaler(out, scaler);
}

inline Scaler load_scaler(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# deepdust scaler v1") throw data_error("scaler: bad magic line");
  std::optional<ScalerPooling> pooling;
  std::vector<ScalerEntry> entries;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) throw data_error("scaler: malformed line '" + std::string(view) + "'");
    auto key = detail::trim(view.substr(0, eq));
    auto value = detail::trim(view.substr(eq + 1));
    if (key == "pooling") {
      pooling = parse_pooling(value);
      continue;
    }
    auto comma = value.find(',');
    auto lo = comma == std::string_view::npos ? std::nullopt : detail::parse_value(value.substr(0, comma));
    auto hi = comma == std::string_view::npos ? std::nullopt : detail::parse_value(value.substr(comma + 1));
    if (!lo || !hi) throw data_error("scaler: malformed bounds for '" + std::string(key) + "'");
    names.emplace_back(key);
    entries.push_back({*lo, *hi});
  }
  if (!pooling) throw data_error("scaler: missing pooling line");
  Scaler scaler(*pooling, std::move(entries));
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] != scaler.entry_name(i)) {
      throw data_error("scaler: entry " + std::to_string(i) + " is '" + names[i] + "', expected '" +
                       scaler.entry_name(i) + "'");
    }
  }
  return scaler;
}

inline Scaler load_scaler(const std::string& path) {
  auto in = detail::open_input(path);
  return load_scaler(in);
}

// Normalized hourly feature vectors, one row of kFeatureDim per hour.
struct FeatureMatrix {
  Hour start;
  std::size_t rows = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * kFeatureDim, static_cast<std::size_t>(kFeatureDim)};
  }
};

inline FeatureMatrix transform(const Scaler& scaler, const ObservationTable& table) {
  if (!scaler.fitted()) throw argument_error("transform: scaler is not fitted");
  FeatureMatrix out{table.start, table.rows, std::vector<double>(table.values.size())};
  for (std::size_t r = 0; r < table.rows; ++r) {
    for (int col = 0; col < kFeatureDim; ++col) {
      out.data[r * kFeatureDim + col] = scaler.normalize(col, table.at(r, col));
    }
  }
  return out;
}

struct TargetVector {
  double pm10 = 0;
  double pm25 = 0;
  int station_id = 0;
};

struct Concentration {
  double pm10 = 0;  // µg/m³
  double pm25 = 0;
};

inline Concentration invert_target(const Scaler& scaler, const TargetVector& y) {
  return {scaler.denormalize(pollutant_column(y.station_id, kPM10), y.pm10),
          scaler.denormalize(pollutant_column(y.station_id, kPM25), y.pm25)};
}

// Sample k pairs feature rows [offset_k, offset_k + window) with the target
// station's normalized PM10/PM2.5 at row offset_k + window. Windows are views
// into a shared FeatureMatrix.
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(std::shared_ptr<const FeatureMatrix> features, int station_id, int window,
                  std::vector<std::size_t> offsets)
      : features_(std::move(features)), station_id_(station_id), window_(window), offsets_(std::move(offsets)) {}

  std::size_t size() const { return offsets_.size(); }
  bool empty() const { return offsets_.empty(); }
  int window() const { return window_; }
  int station_id() const { return station_id_; }
  static constexpr int feature_dim() { return kFeatureDim; }
  const std::shared_ptr<const FeatureMatrix>& features() const { return features_; }
  std::size_t offset(std::size_t k) const { return offsets_.at(k); }

  // window() * kFeatureDim values, hour-major.
  std::span<const double> input(std::size_t k) const {
    return {features_->data.data() + offsets_.at(k) * kFeatureDim,
            static_cast<std::size_t>(window_) * kFeatureDim};
  }

  TargetVector target(std::size_t k) const {
    auto row = features_->row(offsets_.at(k) + static_cast<std::size_t>(window_));
    return {row[pollutant_column(station_id_, kPM10)], row[pollutant_column(station_id_, kPM25)], station_id_};
  }

  Hour target_hour(std::size_t k) const {
    return features_->start + static_cast<std::int64_t>(offsets_.at(k)) + window_;
  }

  WindowedDataset slice(std::size_t begin, std::size_t end) const {
    return {features_, station_id_, window_,
            std::vector<std::size_t>(offsets_.begin() + static_cast<std::ptrdiff_t>(begin),
                                     offsets_.begin() + static_cast<std::ptrdiff_t>(end))};
  }

 private:
  std::shared_ptr<const FeatureMatrix> features_;
  int station_id_ = 0;
  int window_ = kDefaultWindow;
  std::vector<std::size_t> offsets_;
};

inline void check_station(int station_id) {
  if (station_id < 0 || station_id >= kNumStations) {
    throw argument_error("station_id " + std::to_string(station_id) + " out of range [0, " +
                         std::to_string(kNumStations - 1) + "]");
  }
}

inline WindowedDataset make_windows(std::shared_ptr<const FeatureMatrix> features, int station_id,
                                    int window = kDefaultWindow) {
  check_station(station_id);
  if (window < 1) throw argument_error("make_windows: window must be >= 1");
  const auto needed = static_cast<std::size_t>(window) + 1;
  if (!features || features->rows < needed) {
    throw data_error("make_windows: series of " + std::to_string(features ? features->rows : 0) +
                     " hours is shorter than window + 1 = " + std::to_string(needed));
  }
  std::vector<std::size_t> offsets(features->rows - static_cast<std::size_t>(window));
  for (std::size_t k = 0; k < offsets.size(); ++k) offsets[k] = k;
  return {std::move(features), station_id, window, std::move(offsets)};
}

struct SplitPlan {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// floor(n * frac) for train and val, the remainder goes to test.
inline SplitPlan plan_split(std::size_t n_samples, double train_frac, double val_frac) {
  if (!(train_frac > 0) || !(val_frac > 0) || !(train_frac + val_frac < 1)) {
    throw argument_error("split fractions must be positive with sum < 1");
  }
  const auto n = static_cast<double>(n_samples);
  SplitPlan plan;
  plan.train = static_cast<std::size_t>(std::floor(n * train_frac + 1e-9));
  plan.val = static_cast<std::size_t>(std::floor(n * val_frac + 1e-9));
  plan.test = n_samples - std::min(n_samples, plan.train + plan.val);
  if (plan.train == 0 || plan.val == 0 || plan.test == 0) {
    throw data_error("split of " + std::to_string(n_samples) + " samples leaves an empty partition");
  }
  return plan;
}

struct DatasetSplit {
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;
};

// Chronological: earliest samples train, then validation, then test.
inline DatasetSplit split_dataset(const WindowedDataset& ds, double train_frac, double val_frac) {
  const auto plan = plan_split(ds.size(), train_frac, val_frac);
  return {ds.slice(0, plan.train), ds.slice(plan.train, plan.train + plan.val),
          ds.slice(plan.train + plan.val, ds.size())};
}

// Hours touched by the training partition (inputs and targets), i.e. the rows
// the scaler may be fitted on.
inline std::size_t training_rows(std::size_t series_rows, int window, double train_frac, double val_frac) {
  if (series_rows <= static_cast<std::size_t>(window)) {
    throw data_error("series of " + std::to_string(series_rows) + " hours is shorter than window + 1");
  }
  const auto plan = plan_split(series_rows - static_cast<std::size_t>(window), train_frac, val_frac);
  return plan.train + static_cast<std::size_t>(window);
}

}  // namespace deepdust
