#pragma once

// Test-set scoring, the per-station MSE table, hourly prediction series and
// their SVG rendering.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/features.hpp"
#include "deepdust/hour.hpp"
#include "deepdust/ingest.hpp"
#include "deepdust/net.hpp"

namespace deepdust {

// All MSE values are in normalized units; test_mse = mse_pm10 + mse_pm25.
struct EvalReport {
  int station_id = 0;
  std::size_t n_samples = 0;
  double test_mse = 0;
  double mse_pm10 = 0;
  double mse_pm25 = 0;
  double rmse = 0;
  double rmse_pm10_ugm3 = 0;
  double rmse_pm25_ugm3 = 0;
};

template <typename Scalar>
EvalReport evaluate(const LstmModel<Scalar>& model, const Scaler& scaler, const WindowedDataset& test) {
  if (test.empty()) throw data_error("evaluate: empty test set");
  ForwardCache<Scalar> cache;
  double sum10 = 0, sum25 = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto y = test.target(k);
    const auto y_hat = model_forward(model, test.input(k), cache);
    const double d10 = static_cast<double>(y_hat[0]) - y.pm10;
    const double d25 = static_cast<double>(y_hat[1]) - y.pm25;
    sum10 += d10 * d10;
    sum25 += d25 * d25;
  }
  const auto n = static_cast<double>(test.size());
  EvalReport r;
  r.station_id = test.station_id();
  r.n_samples = test.size();
  r.mse_pm10 = sum10 / n;
  r.mse_pm25 = sum25 / n;
  r.test_mse = (sum10 + sum25) / n;
  r.rmse = std::sqrt(r.test_mse);
  const auto& e10 = scaler.entry(pollutant_column(test.station_id(), kPM10));
  const auto& e25 = scaler.entry(pollutant_column(test.station_id(), kPM25));
  r.rmse_pm10_ugm3 = std::sqrt(r.mse_pm10) * (e10.max - e10.min);
  r.rmse_pm25_ugm3 = std::sqrt(r.mse_pm25) * (e25.max - e25.min);
  return r;
}

struct TableRow {
  int station_id = 0;
  double mse = 0;  // normalized units
};

inline constexpr double kTableUnit = 1e-5;

inline std::string format_table_value(double mse) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", mse / kTableUnit);
  return buf;
}

namespace detail {

inline std::vector<TableRow> sorted_rows(std::vector<TableRow> rows) {
  if (rows.empty()) throw argument_error("render_table: no reports");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.station_id < b.station_id; });
  return rows;
}

}  // namespace detail

inline std::vector<TableRow> table_rows(const std::vector<EvalReport>& reports) {
  std::vector<TableRow> rows;
  for (const auto& r : reports) rows.push_back({r.station_id, r.test_mse});
  return rows;
}

// "station,mse_1e-5" header, one row per station ascending, 2 decimals.
inline std::string render_table_csv(const std::vector<TableRow>& rows) {
  std::string out = "station,mse_1e-5\n";
  for (const auto& r : detail::sorted_rows(rows)) {
    out += std::to_string(r.station_id) + "," + format_table_value(r.mse) + "\n";
  }
  return out;
}

inline std::string render_table_text(const std::vector<TableRow>& rows) {
  const auto sorted = detail::sorted_rows(rows);
  std::string out = "MSE per station (unit: 1e-5)\n";
  out += "Station |      MSE\n";
  out += "--------+---------\n";
  char buf[64];
  for (const auto& r : sorted) {
    std::snprintf(buf, sizeof buf, "%7d | %8s\n", r.station_id, format_table_value(r.mse).c_str());
    out += buf;
  }
  return out;
}

inline std::string render_table_csv(const std::vector<EvalReport>& reports) { return render_table_csv(table_rows(reports)); }
inline std::string render_table_text(const std::vector<EvalReport>& reports) { return render_table_text(table_rows(reports)); }

// Inverse of render_table_csv; mse comes back in normalized units.
inline std::vector<TableRow> parse_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "station,mse_1e-5") {
    throw data_error("table csv: malformed header");
  }
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    auto view = detail::trim(line);
    if (view.empty()) continue;
    auto fields = detail::split_csv(view);
    if (fields.size() != 2) throw data_error("table csv: expected 2 fields in '" + std::string(view) + "'");
    TableRow row;
    auto id = detail::trim(fields[0]);
    auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), row.station_id);
    auto value = detail::parse_value(fields[1]);
    if (ec != std::errc{} || ptr != id.data() + id.size() || !value) {
      throw data_error("table csv: malformed row '" + std::string(view) + "'");
    }
    row.mse = *value * kTableUnit;
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<TableRow> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  return parse_table_csv(in);
}

struct SeriesRow {
  Hour timestamp;
  double pm10_pred = 0, pm10_true = 0, pm25_pred = 0, pm25_true = 0;              // normalized
  double pm10_pred_ugm3 = 0, pm10_true_ugm3 = 0, pm25_pred_ugm3 = 0, pm25_true_ugm3 = 0;

  friend bool operator==(const SeriesRow&, const SeriesRow&) = default;
};

struct SeriesExport {
  int station_id = 0;
  std::vector<SeriesRow> rows;
};

// One-step-ahead predictions for the 24 hours of `day`; every window holds
// the 48 observed hours before the predicted hour. Truth columns are the table
// values; their normalized form is left unclamped so it inverts exactly.
template <typename Scalar>
SeriesExport predict_series(const LstmModel<Scalar>& model, const Scaler& scaler, const ObservationTable& table,
                            int station_id, Hour day, int window = kDefaultWindow) {
  check_station(station_id);
  const Hour first = day - window;
  const Hour last = day + 24;
  if (first < table.start || last > table.end()) {
    throw data_error("predict_series: table [" + format_hour(table.start) + ", " + format_hour(table.end()) +
                     ") does not cover " + format_hour(first) + " .. " + format_hour(last - 1));
  }
  const auto row0 = static_cast<std::size_t>(first - table.start);
  FeatureMatrix features{first, static_cast<std::size_t>(window) + 24, {}};
  features.data.resize(features.rows * kFeatureDim);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (int col = 0; col < kFeatureDim; ++col) {
      const double v = table.at(row0 + r, col);
      if (std::isnan(v)) throw data_error("predict_series: table has missing cells; impute first");
      features.data[r * kFeatureDim + col] = scaler.normalize(col, v);
    }
  }
  const int c10 = pollutant_column(station_id, kPM10);
  const int c25 = pollutant_column(station_id, kPM25);
  SeriesExport out{station_id, {}};
  ForwardCache<Scalar> cache;
  for (int h = 0; h < 24; ++h) {
    std::span<const double> input(features.data.data() + static_cast<std::size_t>(h) * kFeatureDim,
                                  static_cast<std::size_t>(window) * kFeatureDim);
    const auto y_hat = model_forward(model, input, cache);
    const auto trow = row0 + static_cast<std::size_t>(window + h);
    SeriesRow row;
    row.timestamp = day + h;
    row.pm10_pred = static_cast<double>(y_hat[0]);
    row.pm25_pred = static_cast<double>(y_hat[1]);
    row.pm10_true_ugm3 = table.at(trow, c10);
    row.pm25_true_ugm3 = table.at(trow, c25);
    row.pm10_true = scaler.scale(c10, row.pm10_true_ugm3);
    row.pm25_true = scaler.scale(c25, row.pm25_true_ugm3);
    const auto pred = invert_target(scaler, {row.pm10_pred, row.pm25_pred, station_id});
    row.pm10_pred_ugm3 = pred.pm10;
    row.pm25_pred_ugm3 = pred.pm25;
    out.rows.push_back(row);
  }
  return out;
}

inline constexpr std::string_view kSeriesHeader =
    "timestamp,pm10_pred,pm10_true,pm25_pred,pm25_true,pm10_pred_ugm3,pm10_true_ugm3,pm25_pred_ugm3,pm25_true_ugm3";

inline void write_series_csv(std::ostream& out, const SeriesExport& series) {
  out << kSeriesHeader << '\n';
  for (const auto& r : series.rows) {
    out << format_hour(r.timestamp);
    for (double v : {r.pm10_pred, r.pm10_true, r.pm25_pred, r.pm25_true, r.pm10_pred_ugm3, r.pm10_true_ugm3,
                     r.pm25_pred_ugm3, r.pm25_true_ugm3}) {
      out << ',' << format_value(v);
    }
    out << '\n';
  }
}

inline SeriesExport read_series_csv(std::istream& in, int station_id = 0) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kSeriesHeader) throw data_error("series csv: malformed header");
  SeriesExport out{station_id, {}};
  while (std::getline(in, line)) {
    auto view = detail::trim(line);
    if (view.empty()) continue;
    auto fields = detail::split_csv(view);
    if (fields.size() != 9) throw data_error("series csv: expected 9 fields");
    SeriesRow r;
    r.timestamp = parse_hour(detail::trim(fields[0]));
    double* dst[] = {&r.pm10_pred, &r.pm10_true, &r.pm25_pred, &r.pm25_true,
                     &r.pm10_pred_ugm3, &r.pm10_true_ugm3, &r.pm25_pred_ugm3, &r.pm25_true_ugm3};
    for (std::size_t i = 0; i < 8; ++i) {
      auto v = detail::parse_value(fields[i + 1]);
      if (!v) throw data_error("series csv: malformed value in '" + std::string(view) + "'");
      *dst[i] = *v;
    }
    out.rows.push_back(r);
  }
  return out;
}

// Two stacked panels (PM10, PM2.5), each with a predicted and a true line
// over hour of day. Normalized units; the y axis spans at least [0, 1].
inline std::string render_svg(const SeriesExport& series) {
  if (series.rows.empty()) throw argument_error("emit_plot: empty series");
  constexpr double kWidth = 640, kPanelHeight = 240, kLeft = 60, kRight = 20, kTop = 30, kBottom = 40;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kPanelHeight - kTop - kBottom;
  const auto n = series.rows.size();

  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  auto x_at = [&](std::size_t i) {
    return kLeft + (n == 1 ? plot_w / 2 : plot_w * static_cast<double>(i) / static_cast<double>(n - 1));
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << 2 * kPanelHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << 2 * kPanelHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  struct Panel {
    const char* title;
    double SeriesRow::*pred;
    double SeriesRow::*truth;
  };
  const Panel panels[] = {{"PM10", &SeriesRow::pm10_pred, &SeriesRow::pm10_true},
                          {"PM2.5", &SeriesRow::pm25_pred, &SeriesRow::pm25_true}};
  for (int p = 0; p < 2; ++p) {
    const auto& panel = panels[p];
    double lo = 0, hi = 1;
    for (const auto& r : series.rows) {
      lo = std::min({lo, r.*panel.pred, r.*panel.truth});
      hi = std::max({hi, r.*panel.pred, r.*panel.truth});
    }
    const double top = p * kPanelHeight + kTop;
    auto y_at = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

    svg << "<g class=\"panel\" id=\"panel-" << p << "\">\n"
        << "<text x=\"" << kLeft << "\" y=\"" << fmt(top - 10) << "\" font-size=\"13\">" << panel.title
        << " (normalized), station " << series.station_id << "</text>\n"
        << "<rect class=\"frame\" x=\"" << kLeft << "\" y=\"" << fmt(top) << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (double tick : {lo, (lo + hi) / 2, hi}) {
      svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y_at(tick) + 4) << "\" text-anchor=\"end\">" << fmt(tick)
          << "</text>\n";
    }
    for (std::size_t i = 0; i < n; i += (n > 12 ? 3 : 1)) {
      svg << "<text x=\"" << fmt(x_at(i)) << "\" y=\"" << fmt(top + plot_h + 14) << "\" text-anchor=\"middle\">"
          << series.rows[i].timestamp.hour_of_day() << "</text>\n";
    }
    svg << "<text x=\"" << fmt(kLeft + plot_w / 2) << "\" y=\"" << fmt(top + plot_h + 30)
        << "\" text-anchor=\"middle\">hour of day (UTC)</text>\n";
    for (int which = 0; which < 2; ++which) {
      const auto member = which == 0 ? panel.pred : panel.truth;
      svg << "<path class=\"" << (which == 0 ? "pred" : "truth") << "\" fill=\"none\" stroke=\""
          << (which == 0 ? "#d62728" : "#1f77b4") << "\" stroke-width=\"1.5\" d=\"";
      for (std::size_t i = 0; i < n; ++i) {
        svg << (i == 0 ? "M" : " L") << fmt(x_at(i)) << ',' << fmt(y_at(series.rows[i].*member));
      }
      svg << "\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "<text x=\"" << kWidth - kRight << "\" y=\"14\" text-anchor=\"end\">"
      << "<tspan fill=\"#d62728\">predicted</tspan> / <tspan fill=\"#1f77b4\">observed</tspan></text>\n"
      << "</svg>\n";
  return svg.str();
}

inline void emit_plot(const SeriesExport& series, const std::string& path) {
  const auto svg = render_svg(series);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("emit_plot: cannot write '" + path + "'");
  out << svg;
  if (!out) throw data_error("emit_plot: failed writing '" + path + "'");
}

}  // namespace deepdust
