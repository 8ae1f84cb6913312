#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deepdust/deepdust.hpp"
#include "support/fixtures.hpp"

namespace deepdust {
namespace {

const std::vector<double> kReferenceTable{30.40, 26.62, 29.32, 44.09, 26.41, 28.96, 46.41, 45.26, 43.48,
                                          31.71, 44.32, 27.37, 28.71, 46.24, 26.27, 31.67, 31.59, 35.51,
                                          23.24, 20.35, 31.71, 29.29, 47.86, 33.57, 32.88};

// Model whose output is the head bias regardless of input.
LstmModel<double> constant_model(double pm10, double pm25, int hidden = 4) {
  ModelShape shape;
  shape.hidden = hidden;
  auto m = init_params<double>(1, shape);
  m.set_zero();
  m.head_b() << pm10, pm25;
  return m;
}

// Features with random inputs and constant station targets.
WindowedDataset constant_target_windows(int station, double pm10, double pm25, std::size_t rows = 60) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto f = std::make_shared<FeatureMatrix>();
  f->start = hour_from_civil(2017, 3, 1, 0);
  f->rows = rows;
  f->data.resize(rows * kFeatureDim);
  for (auto& v : f->data) v = u(rng);
  for (std::size_t r = 0; r < rows; ++r) {
    f->data[r * kFeatureDim + pollutant_column(station, kPM10)] = pm10;
    f->data[r * kFeatureDim + pollutant_column(station, kPM25)] = pm25;
  }
  return make_windows(f, station, 8);
}

TEST(Evaluate, PerfectPredictorHasZeroMse) {
  const auto s = fit_scaler(testing::wavy_table(10));
  const auto r = evaluate(constant_model(0.5, 0.3), s, constant_target_windows(2, 0.5, 0.3));
  EXPECT_EQ(r.test_mse, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.n_samples, 52u);
}

TEST(Evaluate, ConstantOffsetPredictor) {
  const auto s = fit_scaler(testing::wavy_table(10));
  const auto r = evaluate(constant_model(0.5, 0.5), s, constant_target_windows(2, 0.4, 0.4));
  EXPECT_NEAR(r.mse_pm10, 0.01, 1e-15);
  EXPECT_NEAR(r.mse_pm25, 0.01, 1e-15);
  EXPECT_NEAR(r.test_mse, 0.02, 1e-15);
  const auto& e = s.entry(pollutant_column(2, kPM10));
  EXPECT_NEAR(r.rmse_pm10_ugm3, 0.1 * (e.max - e.min), 1e-12);
}

TEST(Evaluate, MatchesLoopOracleAndSumsTargets) {
  const auto t = testing::wavy_table(80);
  const auto s = fit_scaler(t);
  const auto ds = make_windows(std::make_shared<const FeatureMatrix>(transform(s, t)), 9, 12);
  ModelShape shape;
  shape.hidden = 5;
  const auto m = init_params<double>(77, shape);
  const auto r = evaluate(m, s, ds);
  double sum = 0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto y = ds.target(k);
    sum += mse_loss<double>(model_forward(m, ds.input(k)), {y.pm10, y.pm25});
  }
  EXPECT_NEAR(r.test_mse, sum / static_cast<double>(ds.size()), 1e-14);
  EXPECT_NEAR(r.test_mse, r.mse_pm10 + r.mse_pm25, 1e-15);
  EXPECT_EQ(r.station_id, 9);
}

TEST(Evaluate, EmptyTestSetIsError) {
  const auto ds = constant_target_windows(2, 0.4, 0.4, 20);
  const auto s = fit_scaler(testing::wavy_table(10));
  EXPECT_THROW(evaluate(constant_model(0, 0), s, ds.slice(0, 0)), Error);
}

TEST(RenderTable, Formatting) {
  EXPECT_EQ(format_table_value(3.040e-4), "30.40");
  EXPECT_EQ(format_table_value(2.035e-4), "20.35");
  EXPECT_EQ(format_table_value(0.0), "0.00");
  const auto csv = render_table_csv(std::vector<TableRow>{{6, 2.035e-4}, {1, 3.040e-4}});
  EXPECT_EQ(csv, "station,mse_1e-5\n1,30.40\n6,20.35\n");
  const auto text = render_table_text(std::vector<TableRow>{{1, 3.040e-4}});
  EXPECT_NE(text.find("      1 |    30.40"), std::string::npos);
  EXPECT_THROW(render_table_csv(std::vector<TableRow>{}), Error);
  EXPECT_THROW(render_table_text(std::vector<EvalReport>{}), Error);
}

TEST(RenderTable, ReferenceValuesRoundTrip) {
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < kReferenceTable.size(); ++i) {
    rows.push_back({static_cast<int>(i) + 1, kReferenceTable[i] * kTableUnit});
  }
  const auto csv = render_table_csv(rows);
  const auto back = parse_table_csv(csv);
  ASSERT_EQ(back.size(), 25u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].station_id, static_cast<int>(i) + 1);
    EXPECT_EQ(format_table_value(back[i].mse), format_table_value(rows[i].mse));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", kReferenceTable[i]);
    EXPECT_EQ(format_table_value(back[i].mse), buf);
  }
  EXPECT_EQ(render_table_csv(back), csv);
}

TEST(ParseTable, Errors) {
  EXPECT_THROW(parse_table_csv("station,mse\n1,2\n"), Error);
  EXPECT_THROW(parse_table_csv("station,mse_1e-5\nx,2\n"), Error);
  EXPECT_THROW(parse_table_csv("station,mse_1e-5\n1,2,3\n"), Error);
}

class PredictSeries : public ::testing::Test {
 protected:
  void SetUp() override {
    table = impute_missing(testing::wavy_table(24 * 6));
    scaler = fit_scaler(table, 0, 24 * 4);
    ModelShape shape;
    shape.hidden = 6;
    model = init_params<double>(3, shape);
  }
  ObservationTable table;
  Scaler scaler;
  LstmModel<double> model;
};

TEST_F(PredictSeries, TwentyFourHourlyRows) {
  const Hour day = table.start + 24 * 3;
  const auto s = predict_series(model, scaler, table, 6, day);
  ASSERT_EQ(s.rows.size(), 24u);
  EXPECT_EQ(s.station_id, 6);
  for (int h = 0; h < 24; ++h) EXPECT_EQ(s.rows[static_cast<std::size_t>(h)].timestamp, day + h);
}

TEST_F(PredictSeries, FirstWindowIsThe48HoursBeforeTheDay) {
  const Hour day = table.start + 24 * 3;
  const auto s = predict_series(model, scaler, table, 6, day);
  const auto row0 = static_cast<std::size_t>(day - 48 - table.start);
  std::vector<double> window(48 * kFeatureDim);
  for (std::size_t r = 0; r < 48; ++r)
    for (int c = 0; c < kFeatureDim; ++c) window[r * kFeatureDim + c] = scaler.normalize(c, table.at(row0 + r, c));
  const auto y = model_forward(model, window);
  EXPECT_EQ(s.rows[0].pm10_pred, y[0]);
  EXPECT_EQ(s.rows[0].pm25_pred, y[1]);
}

TEST_F(PredictSeries, TruthMatchesTableAndInvertsPredictions) {
  const Hour day = table.start + 24 * 4;
  const auto s = predict_series(model, scaler, table, 6, day);
  const int c10 = pollutant_column(6, kPM10), c25 = pollutant_column(6, kPM25);
  for (std::size_t h = 0; h < 24; ++h) {
    const auto r = static_cast<std::size_t>(day - table.start) + h;
    EXPECT_EQ(s.rows[h].pm10_true_ugm3, table.at(r, c10));
    EXPECT_EQ(s.rows[h].pm25_true_ugm3, table.at(r, c25));
    const auto truth = invert_target(scaler, {s.rows[h].pm10_true, s.rows[h].pm25_true, 6});
    EXPECT_NEAR(truth.pm10, s.rows[h].pm10_true_ugm3, 1e-9 * std::abs(truth.pm10));
    EXPECT_NEAR(truth.pm25, s.rows[h].pm25_true_ugm3, 1e-9 * std::abs(truth.pm25));
    const auto& e = scaler.entry(c10);
    EXPECT_NEAR(s.rows[h].pm10_pred_ugm3, e.min + s.rows[h].pm10_pred * (e.max - e.min), 1e-9);
  }
}

TEST_F(PredictSeries, InsufficientHistoryIsError) {
  EXPECT_THROW(predict_series(model, scaler, table, 6, table.start + 24), Error);
  EXPECT_THROW(predict_series(model, scaler, table, 6, table.start + 24 * 6), Error);
  EXPECT_NO_THROW(predict_series(model, scaler, table, 6, table.start + 48));
}

TEST(SeriesCsv, RoundTrip) {
  const auto table = testing::wavy_table(24 * 3);
  const auto scaler = fit_scaler(table);
  ModelShape shape;
  shape.hidden = 4;
  const auto s = predict_series(init_params<double>(9, shape), scaler, table, 1, table.start + 48);
  std::stringstream ss;
  write_series_csv(ss, s);
  const auto back = read_series_csv(ss, 1);
  EXPECT_EQ(back.rows, s.rows);
}

SeriesExport flat_series(double pred, double truth) {
  SeriesExport s{4, {}};
  for (int h = 0; h < 24; ++h) {
    SeriesRow r;
    r.timestamp = hour_from_civil(2017, 3, 17, h);
    r.pm10_pred = r.pm25_pred = pred;
    r.pm10_true = r.pm25_true = truth;
    s.rows.push_back(r);
  }
  return s;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

TEST(RenderSvg, TwoPanelsTwoLinesEach) {
  const auto svg = render_svg(flat_series(0.3, 0.6));
  EXPECT_EQ(count(svg, "<g class=\"panel\""), 2u);
  EXPECT_EQ(count(svg, "<path class=\"pred\""), 2u);
  EXPECT_EQ(count(svg, "<path class=\"truth\""), 2u);
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(RenderSvg, FlatLinesAtExpectedHeight) {
  const auto svg = render_svg(flat_series(0.0, 1.0));
  // Panel 0 spans y in [30, 200]: value 1 sits on the top edge, value 0 on the bottom.
  EXPECT_NE(svg.find("<path class=\"pred\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" d=\"M60.000,200.000"),
            std::string::npos);
  EXPECT_NE(svg.find("d=\"M60.000,30.000"), std::string::npos);
}

TEST(RenderSvg, DeterministicAndRejectsEmpty) {
  EXPECT_EQ(render_svg(flat_series(0.2, 0.4)), render_svg(flat_series(0.2, 0.4)));
  EXPECT_THROW(render_svg(SeriesExport{}), Error);
  EXPECT_THROW(emit_plot(flat_series(0.2, 0.4), "/nonexistent/dir/plot.svg"), Error);
}

}  // namespace
}  // namespace deepdust
