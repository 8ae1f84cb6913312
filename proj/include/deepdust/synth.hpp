#pragma once

// Synthetic hourly pollutant/climate data with a diurnal sunlight cycle,
// sunlight-driven O3, AR(1) primary pollutants and wind-modulated dust.
//
//   sunlight(t)  = max(0, sin(pi * (hour_of_day - 6) / 12))
//   o3_s(t)      = base_s + coupling_o3 * 0.04 * sunlight(t - lag) + noise
//   x_s(t)       = mu_s + 0.9 * (x_s(t-1) - mu_s) + noise      for SO2, CO, NO2
//   pm10_s(t)    = 10 + 12 so2/mu + 8 co/mu + 10 no2/mu + coupling_wind * 6 * wind(t) + noise
//   pm25_s(t)    = 0.55 * (pm10_s(t) - coupling_wind * 6 * wind(t)) + noise
//
// Every noise term is scaled by `noise_std`; values are clipped to their
// physical ranges.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/hour.hpp"
#include "deepdust/ingest.hpp"

namespace deepdust {

struct SynthConfig {
  int n_hours = 2000;
  std::uint64_t seed = 1;
  int n_stations = kNumStations;
  double noise_std = 1.0;
  double o3_sunlight_coupling = 1.0;
  int o3_lag = 2;
  double pm_wind_coupling = 1.0;
  Hour start = hour_from_civil(2017, 1, 1, 0);

  void validate() const {
    if (n_hours < 72) throw argument_error("synth: n_hours must be >= 72");
    if (!(noise_std >= 0)) throw argument_error("synth: noise_std must be >= 0");
    if (n_stations < 1 || n_stations > kNumStations) throw argument_error("synth: n_stations must be in [1, 39]");
    if (o3_lag < 0) throw argument_error("synth: o3_lag must be >= 0");
  }
};

struct SynthData {
  std::vector<PollutantRecord> pollutants;  // ordered by (timestamp, station)
  std::vector<ClimateRecord> climate;       // ordered by timestamp
};

inline double synthetic_sunlight(Hour h) {
  const double s = std::sin(std::numbers::pi * (h.hour_of_day() - 6) / 12.0);
  return std::max(0.0, s);
}

inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise = [&](double scale) { return cfg.noise_std > 0 ? cfg.noise_std * scale * normal(rng) : 0.0; };

  struct Station {
    double o3_base, mu_so2, mu_co, mu_no2;
    double so2, co, no2;
  };
  std::vector<Station> stations(static_cast<std::size_t>(cfg.n_stations));
  for (auto& s : stations) {
    s.o3_base = 0.015 + 0.01 * unit(rng);
    s.mu_so2 = 0.004 + 0.003 * unit(rng);
    s.mu_co = 0.4 + 0.3 * unit(rng);
    s.mu_no2 = 0.025 + 0.02 * unit(rng);
    s.so2 = s.mu_so2;
    s.co = s.mu_co;
    s.no2 = s.mu_no2;
  }

  constexpr double kPhi = 0.9;
  double wind = 2.5, pressure = 1013.0;
  int sector = 0;
  SynthData out;
  out.pollutants.reserve(static_cast<std::size_t>(cfg.n_hours) * stations.size());
  out.climate.reserve(static_cast<std::size_t>(cfg.n_hours));

  for (int t = 0; t < cfg.n_hours; ++t) {
    const Hour now = cfg.start + t;
    const double sun = synthetic_sunlight(now);
    const double sun_lagged = synthetic_sunlight(now - cfg.o3_lag);

    wind = std::max(0.0, 2.5 + 0.85 * (wind - 2.5) + noise(0.6));
    if (cfg.noise_std > 0) {
      const double u = unit(rng);
      sector = (sector + (u < 1.0 / 3 ? kNumWindSectors - 1 : u < 2.0 / 3 ? 0 : 1)) % kNumWindSectors;
    }
    pressure = 1013.0 + 0.95 * (pressure - 1013.0) + noise(0.5);
    const double temp = 8.0 + 7.0 * synthetic_sunlight(now - 2) + noise(1.0);
    const double humidity = std::clamp(70.0 - 25.0 * sun + noise(5.0), 5.0, 100.0);
    const double dew_point = temp - (100.0 - humidity) / 5.0;
    const double vapor = 6.11 * std::pow(10.0, 7.5 * dew_point / (237.3 + dew_point));

    double pm10_sum = 0;
    for (std::size_t s = 0; s < stations.size(); ++s) {
      auto& st = stations[s];
      st.so2 = std::max(0.0, st.mu_so2 + kPhi * (st.so2 - st.mu_so2) + noise(0.15 * st.mu_so2));
      st.co = std::max(0.0, st.mu_co + kPhi * (st.co - st.mu_co) + noise(0.15 * st.mu_co));
      st.no2 = std::max(0.0, st.mu_no2 + kPhi * (st.no2 - st.mu_no2) + noise(0.15 * st.mu_no2));
      const double o3 = std::max(0.0, st.o3_base + cfg.o3_sunlight_coupling * 0.04 * sun_lagged + noise(0.004));
      const double wind_dust = cfg.pm_wind_coupling * 6.0 * wind;
      const double primary = 10.0 + 12.0 * st.so2 / st.mu_so2 + 8.0 * st.co / st.mu_co + 10.0 * st.no2 / st.mu_no2;
      const double pm10 = std::max(0.0, primary + wind_dust + noise(3.0));
      const double pm25 = std::max(0.0, 0.55 * (pm10 - wind_dust) + noise(2.0));
      pm10_sum += pm10;

      PollutantRecord rec;
      rec.station_id = static_cast<int>(s);
      rec.timestamp = now;
      rec.values = {st.so2, st.co, st.no2, o3, pm10, pm25};
      out.pollutants.push_back(rec);
    }
    const double visibility = 20000.0 / (1.0 + pm10_sum / static_cast<double>(stations.size()) / 40.0);

    ClimateRecord c;
    c.timestamp = now;
    c.values = {wind, static_cast<double>(sector), humidity, vapor, dew_point, pressure, sun, visibility, temp};
    out.climate.push_back(c);
  }
  return out;
}

// Blanks each value cell independently with probability `gap_fraction`, then
// restores one cell in any (station, variable) column that lost every value.
inline SynthData inject_gaps(const SynthData& data, double gap_fraction, std::uint64_t seed,
                             std::size_t* blanked = nullptr) {
  if (!(gap_fraction >= 0 && gap_fraction < 0.5)) throw argument_error("inject_gaps: gap_fraction must lie in [0, 0.5)");
  SynthData out = data;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(gap_fraction);

  std::vector<std::size_t> present(kFeatureDim, 0);
  std::vector<std::array<std::size_t, 2>> first_seen(kFeatureDim, {SIZE_MAX, 0});  // {record index, field}
  std::size_t count = 0;

  for (std::size_t i = 0; i < out.pollutants.size(); ++i) {
    auto& r = out.pollutants[i];
    for (int j = 0; j < kNumPollutants; ++j) {
      if (!r.values[j]) continue;
      const auto col = static_cast<std::size_t>(pollutant_column(r.station_id, j));
      if (first_seen[col][0] == SIZE_MAX) first_seen[col] = {i, static_cast<std::size_t>(j)};
      if (gap_fraction > 0 && drop(rng)) {
        r.values[j].reset();
        ++count;
      } else {
        ++present[col];
      }
    }
  }
  for (std::size_t i = 0; i < out.climate.size(); ++i) {
    auto& r = out.climate[i];
    for (int j = 0; j < kNumClimate; ++j) {
      if (!r.values[j]) continue;
      const auto col = static_cast<std::size_t>(climate_column(j));
      if (first_seen[col][0] == SIZE_MAX) first_seen[col] = {i, static_cast<std::size_t>(j)};
      if (gap_fraction > 0 && drop(rng)) {
        r.values[j].reset();
        ++count;
      } else {
        ++present[col];
      }
    }
  }
  for (int col = 0; col < kFeatureDim; ++col) {
    const auto [idx, field] = first_seen[static_cast<std::size_t>(col)];
    if (present[static_cast<std::size_t>(col)] > 0 || idx == SIZE_MAX) continue;
    if (col < kClimateOffset) {
      out.pollutants[idx].values[field] = data.pollutants[idx].values[field];
    } else {
      out.climate[idx].values[field] = data.climate[idx].values[field];
    }
    --count;
  }
  if (blanked) *blanked = count;
  return out;
}

}  // namespace deepdust
