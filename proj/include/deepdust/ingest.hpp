#pragma once

// Hourly pollutant / climate CSV ingestion, hourly alignment and gap imputation.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/hour.hpp"

namespace deepdust {

inline constexpr int kNumStations = 39;
inline constexpr int kNumPollutants = 6;
inline constexpr int kNumClimate = 9;
inline constexpr int kNumWindSectors = 16;
inline constexpr int kClimateOffset = kNumStations * kNumPollutants;   // 234
inline constexpr int kFeatureDim = kClimateOffset + kNumClimate;       // 243

enum Pollutant : int { kSO2 = 0, kCO, kNO2, kO3, kPM10, kPM25 };

enum ClimateVar : int {
  kWindSpeed = 0,
  kWindDirection,
  kHumidity,
  kVaporPressure,
  kDewPoint,
  kSurfacePressure,
  kSunlight,
  kVisibility,
  kSurfaceTemp,
};

inline constexpr std::array<std::string_view, kNumPollutants> kPollutantNames = {
    "so2", "co", "no2", "o3", "pm10", "pm25"};

inline constexpr std::array<std::string_view, kNumClimate> kClimateNames = {
    "wind_speed", "wind_dir",   "humidity",   "vapor_pressure", "dew_point",
    "surface_pressure", "sunlight", "visibility", "surface_temp"};

// 16-point compass rose, clockwise from north.
inline constexpr std::array<std::string_view, kNumWindSectors> kWindSectorCodes = {
    "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW"};

inline constexpr std::string_view kPollutantHeader = "station_id,timestamp,so2,co,no2,o3,pm10,pm25";
inline constexpr std::string_view kClimateHeader =
    "timestamp,wind_speed,wind_dir,humidity,vapor_pressure,dew_point,surface_pressure,sunlight,"
    "visibility,surface_temp";

inline int wind_sector_index(std::string_view code) {
  for (int i = 0; i < kNumWindSectors; ++i) {
    if (kWindSectorCodes[i] == code) return i;
  }
  throw data_error("unknown wind-direction sector '" + std::string(code) + "'");
}

struct PollutantRecord {
  int station_id = 0;
  Hour timestamp;
  std::array<std::optional<double>, kNumPollutants> values;

  friend bool operator==(const PollutantRecord&, const PollutantRecord&) = default;
};

// values[kWindDirection] holds the sector index 0..15.
struct ClimateRecord {
  Hour timestamp;
  std::array<std::optional<double>, kNumClimate> values;

  friend bool operator==(const ClimateRecord&, const ClimateRecord&) = default;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Empty, unparseable or non-finite fields are missing.
inline std::optional<double> parse_value(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<double> non_negative(std::optional<double> v) {
  if (v && *v < 0) return std::nullopt;
  return v;
}

inline std::optional<double> within(std::optional<double> v, double lo, double hi) {
  if (v && (*v < lo || *v > hi)) return std::nullopt;
  return v;
}

template <typename LineFn>
void for_each_data_line(std::istream& in, std::string_view header, const std::string& source, LineFn&& fn) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != header) {
    throw data_error(source + ": malformed header, expected '" + std::string(header) + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    fn(view, line_no);
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "': file not found or unreadable");
  return in;
}

}  // namespace detail

// Shortest representation that parses back to the identical double.
inline std::string format_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<PollutantRecord> parse_pollutant_csv(std::istream& in, const std::string& source = "pollutants",
                                                        int utc_offset_hours = 0) {
  std::vector<PollutantRecord> records;
  std::set<std::pair<int, std::int64_t>> seen;
  detail::for_each_data_line(in, kPollutantHeader, source, [&](std::string_view line, std::size_t line_no) {
    const auto where = source + ":" + std::to_string(line_no);
    auto fields = detail::split_csv(line);
    if (fields.size() != 2 + kNumPollutants) {
      throw data_error(where + ": expected " + std::to_string(2 + kNumPollutants) + " fields, got " +
                       std::to_string(fields.size()));
    }
    PollutantRecord rec;
    auto id_field = detail::trim(fields[0]);
    auto [ptr, ec] = std::from_chars(id_field.data(), id_field.data() + id_field.size(), rec.station_id);
    if (ec != std::errc{} || ptr != id_field.data() + id_field.size()) {
      throw data_error(where + ": malformed station_id '" + std::string(id_field) + "'");
    }
    if (rec.station_id < 0 || rec.station_id >= kNumStations) {
      throw data_error(where + ": station_id " + std::to_string(rec.station_id) + " out of range [0, " +
                       std::to_string(kNumStations - 1) + "]");
    }
    try {
      rec.timestamp = parse_hour(detail::trim(fields[1]), utc_offset_hours);
    } catch (const Error& e) {
      throw data_error(where + ": " + e.what());
    }
    for (int j = 0; j < kNumPollutants; ++j) {
      rec.values[j] = detail::non_negative(detail::parse_value(fields[2 + j]));
    }
    if (!seen.emplace(rec.station_id, rec.timestamp.index).second) {
      throw data_error(where + ": duplicate record for station " + std::to_string(rec.station_id) + " at " +
                       format_hour(rec.timestamp));
    }
    records.push_back(rec);
  });
  return records;
}

inline std::vector<PollutantRecord> parse_pollutant_csv(const std::string& path, int utc_offset_hours = 0) {
  auto in = detail::open_input(path);
  return parse_pollutant_csv(in, path, utc_offset_hours);
}

inline std::vector<ClimateRecord> parse_climate_csv(std::istream& in, const std::string& source = "climate",
                                                    int utc_offset_hours = 0) {
  std::vector<ClimateRecord> records;
  std::set<std::int64_t> seen;
  detail::for_each_data_line(in, kClimateHeader, source, [&](std::string_view line, std::size_t line_no) {
    const auto where = source + ":" + std::to_string(line_no);
    auto fields = detail::split_csv(line);
    if (fields.size() != 1 + kNumClimate) {
      throw data_error(where + ": expected " + std::to_string(1 + kNumClimate) + " fields, got " +
                       std::to_string(fields.size()));
    }
    ClimateRecord rec;
    try {
      rec.timestamp = parse_hour(detail::trim(fields[0]), utc_offset_hours);
      for (int j = 0; j < kNumClimate; ++j) {
        auto field = detail::trim(fields[1 + j]);
        if (j == kWindDirection) {
          if (!field.empty()) rec.values[j] = wind_sector_index(field);
          continue;
        }
        auto v = detail::parse_value(field);
        switch (j) {
          case kHumidity: v = detail::within(v, 0.0, 100.0); break;
          case kSunlight: v = detail::within(v, 0.0, 1.0); break;
          case kWindSpeed:
          case kVaporPressure:
          case kSurfacePressure:
          case kVisibility: v = detail::non_negative(v); break;
          default: break;
        }
        rec.values[j] = v;
      }
    } catch (const Error& e) {
      throw data_error(where + ": " + e.what());
    }
    if (!seen.insert(rec.timestamp.index).second) {
      throw data_error(where + ": duplicate climate record at " + format_hour(rec.timestamp));
    }
    records.push_back(rec);
  });
  return records;
}

inline std::vector<ClimateRecord> parse_climate_csv(const std::string& path, int utc_offset_hours = 0) {
  auto in = detail::open_input(path);
  return parse_climate_csv(in, path, utc_offset_hours);
}

inline void write_pollutant_csv(std::ostream& out, const std::vector<PollutantRecord>& records) {
  out << kPollutantHeader << '\n';
  for (const auto& r : records) {
    out << r.station_id << ',' << format_hour(r.timestamp);
    for (const auto& v : r.values) {
      out << ',';
      if (v) out << format_value(*v);
    }
    out << '\n';
  }
}

inline void write_climate_csv(std::ostream& out, const std::vector<ClimateRecord>& records) {
  out << kClimateHeader << '\n';
  for (const auto& r : records) {
    out << format_hour(r.timestamp);
    for (int j = 0; j < kNumClimate; ++j) {
      out << ',';
      const auto& v = r.values[j];
      if (!v) continue;
      if (j == kWindDirection) {
        out << kWindSectorCodes.at(static_cast<std::size_t>(*v));
      } else {
        out << format_value(*v);
      }
    }
    out << '\n';
  }
}

// Column layout of an ObservationTable row, identical to the feature vector:
// [station 0: so2..pm25, station 1: ..., station 38: ..., climate 0..8].
constexpr int pollutant_column(int station_id, int pollutant) { return station_id * kNumPollutants + pollutant; }
constexpr int climate_column(int var) { return kClimateOffset + var; }

inline std::string column_name(int col) {
  if (col >= kClimateOffset) return std::string(kClimateNames.at(col - kClimateOffset));
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02d.", col / kNumPollutants);
  return buf + std::string(kPollutantNames[col % kNumPollutants]);
}

// Gap-free hourly grid. Missing cells are NaN until impute_missing runs.
struct ObservationTable {
  Hour start;
  std::size_t rows = 0;
  std::vector<double> values;          // rows x kFeatureDim, row-major
  std::vector<std::uint8_t> imputed;   // same shape; 1 where a value was filled in

  static constexpr std::size_t cols() { return kFeatureDim; }

  double& at(std::size_t row, int col) { return values[row * kFeatureDim + col]; }
  double at(std::size_t row, int col) const { return values[row * kFeatureDim + col]; }
  bool is_imputed(std::size_t row, int col) const { return imputed[row * kFeatureDim + col] != 0; }
  bool is_missing(std::size_t row, int col) const { return std::isnan(at(row, col)); }
  Hour hour(std::size_t row) const { return start + static_cast<std::int64_t>(row); }
  Hour end() const { return start + static_cast<std::int64_t>(rows); }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }));
  }
  std::size_t imputed_count() const {
    return static_cast<std::size_t>(std::count(imputed.begin(), imputed.end(), std::uint8_t{1}));
  }
};

// Builds the hourly grid over [start, end). Records outside the range are ignored.
inline ObservationTable align_hourly(const std::vector<PollutantRecord>& pollutants,
                                     const std::vector<ClimateRecord>& climate, Hour start, Hour end) {
  if (end <= start) {
    throw argument_error("align_hourly: end (" + format_hour(end) + ") must be after start (" + format_hour(start) +
                         ")");
  }
  ObservationTable table;
  table.start = start;
  table.rows = static_cast<std::size_t>(end - start);
  table.values.assign(table.rows * kFeatureDim, std::numeric_limits<double>::quiet_NaN());
  table.imputed.assign(table.rows * kFeatureDim, 0);

  std::size_t filled = 0;
  auto in_range = [&](Hour h) { return h >= start && h < end; };
  for (const auto& r : pollutants) {
    if (!in_range(r.timestamp)) continue;
    const auto row = static_cast<std::size_t>(r.timestamp - start);
    for (int j = 0; j < kNumPollutants; ++j) {
      if (!r.values[j]) continue;
      table.at(row, pollutant_column(r.station_id, j)) = *r.values[j];
      ++filled;
    }
  }
  for (const auto& r : climate) {
    if (!in_range(r.timestamp)) continue;
    const auto row = static_cast<std::size_t>(r.timestamp - start);
    for (int j = 0; j < kNumClimate; ++j) {
      if (!r.values[j]) continue;
      table.at(row, climate_column(j)) = *r.values[j];
      ++filled;
    }
  }
  if (filled == 0) {
    throw data_error("align_hourly: no observations within [" + format_hour(start) + ", " + format_hour(end) + ")");
  }
  return table;
}

// Earliest and one-past-latest timestamp over both record sets.
inline std::pair<Hour, Hour> observed_span(const std::vector<PollutantRecord>& pollutants,
                                           const std::vector<ClimateRecord>& climate) {
  if (pollutants.empty() && climate.empty()) throw data_error("no records");
  Hour lo{std::numeric_limits<std::int64_t>::max()};
  Hour hi{std::numeric_limits<std::int64_t>::min()};
  for (const auto& r : pollutants) lo = std::min(lo, r.timestamp), hi = std::max(hi, r.timestamp);
  for (const auto& r : climate) lo = std::min(lo, r.timestamp), hi = std::max(hi, r.timestamp);
  return {lo, hi + 1};
}

// Fills every missing cell from the same column: linear interpolation between
// the nearest present neighbours, nearest-value fill at the series edges. The
// categorical wind-direction column takes the nearest present sector instead
// (the earlier one on ties) so it stays a valid sector index.
inline ObservationTable impute_missing(ObservationTable table) {
  const auto n = table.rows;
  std::vector<std::size_t> present;
  for (int col = 0; col < kFeatureDim; ++col) {
    present.clear();
    for (std::size_t r = 0; r < n; ++r) {
      if (!table.is_missing(r, col)) present.push_back(r);
    }
    if (present.empty()) {
      throw data_error("impute_missing: column '" + column_name(col) + "' has no observed values");
    }
    if (present.size() == n) continue;
    const bool categorical = col == climate_column(kWindDirection);

    auto fill = [&](std::size_t r, double v) {
      table.at(r, col) = v;
      table.imputed[r * kFeatureDim + col] = 1;
    };
    for (std::size_t r = 0; r < present.front(); ++r) fill(r, table.at(present.front(), col));
    for (std::size_t r = present.back() + 1; r < n; ++r) fill(r, table.at(present.back(), col));
    for (std::size_t k = 0; k + 1 < present.size(); ++k) {
      const auto lo = present[k], hi = present[k + 1];
      const double a = table.at(lo, col), b = table.at(hi, col);
      for (std::size_t r = lo + 1; r < hi; ++r) {
        if (categorical) {
          fill(r, (r - lo) <= (hi - r) ? a : b);
        } else {
          const double w = static_cast<double>(r - lo) / static_cast<double>(hi - lo);
          fill(r, a + (b - a) * w);
        }
      }
    }
  }
  return table;
}

}  // namespace deepdust
