#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "deepdust/deepdust.hpp"

namespace deepdust::testing {

// Fully observed table whose cell (row, col) is value(row, col).
inline ObservationTable make_table(std::size_t rows, const std::function<double(std::size_t, int)>& value,
                                   Hour start = hour_from_civil(2017, 3, 1, 0)) {
  ObservationTable t;
  t.start = start;
  t.rows = rows;
  t.values.resize(rows * kFeatureDim);
  t.imputed.assign(rows * kFeatureDim, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (int c = 0; c < kFeatureDim; ++c) t.at(r, c) = value(r, c);
  return t;
}

// Smooth, column-distinct values with wind direction kept a valid sector.
inline ObservationTable wavy_table(std::size_t rows, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> phase(kFeatureDim), scale(kFeatureDim);
  for (int c = 0; c < kFeatureDim; ++c) phase[c] = 6.28 * u(rng), scale[c] = 1.0 + 50.0 * u(rng);
  return make_table(rows, [&](std::size_t r, int c) {
    if (c == climate_column(kWindDirection)) return static_cast<double>((r / 3 + static_cast<std::size_t>(c)) % 16);
    return scale[c] * (1.2 + std::sin(0.26 * static_cast<double>(r) + phase[c]));
  });
}

inline std::vector<double> random_window(std::mt19937_64& rng, int steps, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(steps * dim));
  for (auto& v : w) v = u(rng);
  return w;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                  double floor = 1e-6) {
  double m = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    m = std::max(m, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return m;
}

}  // namespace deepdust::testing
