#pragma once

// Command-line front end: synth, check, train, eval, predict, plot.
//
// Exit codes: 0 success, 2 bad arguments, 3 data/I-O errors, 4 training
// divergence. Commands whose stdout carries a payload (the eval table, a
// series CSV without --out) print their JSON summary to stderr instead.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deepdust/error.hpp"
#include "deepdust/eval.hpp"
#include "deepdust/features.hpp"
#include "deepdust/hour.hpp"
#include "deepdust/ingest.hpp"
#include "deepdust/net.hpp"
#include "deepdust/synth.hpp"
#include "deepdust/train.hpp"

namespace deepdust::cli {

// The 25 district stations used when neither --stations nor the config names any.
inline std::vector<int> default_district_stations() {
  std::vector<int> ids;
  for (int i = 1; i <= 25; ++i) ids.push_back(i);
  return ids;
}

struct Options {
  // synth
  std::string out_dir;
  int hours = 2000;
  std::uint64_t seed = 1;
  double noise = 1.0;
  double o3_coupling = 1.0;
  int o3_lag = 2;
  double wind_coupling = 1.0;
  std::string start_text;
  std::string end_text;
  double gap_fraction = 0.0;
  // data
  std::string pollutants;
  std::string climate;
  int utc_offset = 0;
  // train
  std::string config_path;
  std::string stations;
  int epochs = 0;
  int jobs = 1;
  // eval / predict / plot
  std::string registry;
  std::string csv_out;
  int station = -1;
  std::string day;
  std::string out;
  std::string series;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot write '" + path.string() + "'");
  f << contents;
  if (!f) throw data_error("failed writing '" + path.string() + "'");
}

inline std::optional<Hour> optional_hour(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return parse_hour(text);
}

// Parses and aligns the two CSVs; the span defaults to the observed one.
inline ObservationTable load_table(const DataSource& src) {
  if (src.pollutants.empty() || src.climate.empty()) throw argument_error("both --pollutants and --climate are required");
  auto pollutants = parse_pollutant_csv(src.pollutants, src.utc_offset);
  auto climate = parse_climate_csv(src.climate, src.utc_offset);
  auto [lo, hi] = observed_span(pollutants, climate);
  return align_hourly(pollutants, climate, src.start.value_or(lo), src.end.value_or(hi));
}

inline void print_summary(std::ostream& os, const nlohmann::ordered_json& j) { os << j.dump() << '\n'; }

inline DataSource data_source(const Options& o) {
  return {o.pollutants, o.climate, optional_hour(o.start_text), optional_hour(o.end_text), o.utc_offset};
}

// Registry records carry their data source; explicit flags override it.
inline DataSource resolve_source(const ManifestRecord& rec, const Options& o) {
  DataSource src = rec.source;
  if (!o.pollutants.empty()) src.pollutants = o.pollutants;
  if (!o.climate.empty()) src.climate = o.climate;
  return src;
}

struct LoadedStation {
  ManifestRecord record;
  LstmModel<double> model;
  Scaler scaler;
};

inline LoadedStation load_station(const std::filesystem::path& registry_dir, const ManifestRecord& rec) {
  return {rec, load_checkpoint<double>((registry_dir / rec.checkpoint).string()),
          load_scaler((registry_dir / rec.scaler).string())};
}

}  // namespace detail

inline int run_synth(const Options& o, Context& ctx) {
  SynthConfig cfg;
  cfg.n_hours = o.hours;
  cfg.seed = o.seed;
  cfg.noise_std = o.noise;
  cfg.o3_sunlight_coupling = o.o3_coupling;
  cfg.o3_lag = o.o3_lag;
  cfg.pm_wind_coupling = o.wind_coupling;
  if (!o.start_text.empty()) cfg.start = parse_hour(o.start_text);
  auto data = generate(cfg);
  std::size_t blanked = 0;
  if (o.gap_fraction > 0) data = inject_gaps(data, o.gap_fraction, mix_seed(o.seed, 0x6761707300ULL), &blanked);

  const std::filesystem::path dir(o.out_dir);
  std::filesystem::create_directories(dir);
  std::ostringstream p, c;
  write_pollutant_csv(p, data.pollutants);
  write_climate_csv(c, data.climate);
  detail::write_file(dir / "pollutants.csv", p.str());
  detail::write_file(dir / "climate.csv", c.str());

  nlohmann::ordered_json j;
  j["command"] = "synth";
  j["hours"] = cfg.n_hours;
  j["seed"] = cfg.seed;
  j["start"] = format_hour(cfg.start);
  j["pollutant_rows"] = data.pollutants.size();
  j["climate_rows"] = data.climate.size();
  j["blanked_cells"] = blanked;
  j["pollutants"] = (dir / "pollutants.csv").string();
  j["climate"] = (dir / "climate.csv").string();
  detail::print_summary(ctx.out, j);
  return 0;
}

inline int run_check(const Options& o, Context& ctx) {
  const auto raw = detail::load_table(detail::data_source(o));
  const auto missing = raw.missing_count();
  const auto table = impute_missing(raw);
  nlohmann::ordered_json j;
  j["command"] = "check";
  j["start"] = format_hour(table.start);
  j["end"] = format_hour(table.end());
  j["rows"] = table.rows;
  j["columns"] = kFeatureDim;
  j["missing_cells"] = missing;
  j["imputed_cells"] = table.imputed_count();
  detail::print_summary(ctx.out, j);
  return 0;
}

inline int run_train(const Options& o, Context& ctx, const CLI::App& sub) {
  TrainConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (sub.count("--seed") > 0) cfg.seed = o.seed;
  if (sub.count("--epochs") > 0) cfg.epochs = o.epochs;
  if (!o.stations.empty()) cfg.stations = parse_station_list(o.stations);
  if (cfg.stations.empty()) cfg.stations = default_district_stations();
  cfg.validate();
  if (o.jobs < 1) throw argument_error("--jobs must be >= 1");

  const auto source = detail::data_source(o);
  auto table = std::make_shared<const ObservationTable>(detail::load_table(source));
  std::vector<StationJob> jobs;
  for (int s : cfg.stations) jobs.push_back({s, table});

  DataSource recorded = source;
  recorded.pollutants = std::filesystem::absolute(source.pollutants).lexically_normal().string();
  recorded.climate = std::filesystem::absolute(source.climate).lexically_normal().string();
  recorded.start = table->start;
  recorded.end = table->end();

  const std::filesystem::path dir(o.out_dir);
  auto registry = train_all(jobs, cfg, dir, o.jobs);
  write_manifest((dir / "registry.jsonl").string(), manifest_records(registry, cfg, recorded));

  nlohmann::ordered_json j;
  j["command"] = "train";
  j["registry"] = (dir / "registry.jsonl").string();
  j["seed"] = cfg.seed;
  j["trained"] = registry.entries.size();
  auto& stations = j["stations"] = nlohmann::ordered_json::array();
  for (const auto& [id, e] : registry.entries) {
    stations.push_back({{"station_id", id},
                        {"best_val_mse", e.report.best_val_mse},
                        {"best_epoch", e.report.best_epoch},
                        {"epochs_run", e.report.epochs_run()}});
  }
  auto& failures = j["failures"] = nlohmann::ordered_json::array();
  for (const auto& [id, msg] : registry.failures) failures.push_back({{"station_id", id}, {"error", msg}});
  detail::print_summary(ctx.out, j);
  for (const auto& [id, msg] : registry.failures) ctx.err << "error: station " << id << ": " << msg << '\n';
  if (registry.any_divergence) return 4;
  return registry.failures.empty() ? 0 : 3;
}

inline int run_eval(const Options& o, Context& ctx) {
  const auto records = read_manifest(o.registry);
  if (records.empty()) throw data_error("registry '" + o.registry + "' has no entries");
  const auto dir = std::filesystem::path(o.registry).parent_path();
  std::map<std::pair<std::string, std::string>, std::shared_ptr<const ObservationTable>> tables;
  std::vector<EvalReport> reports;
  for (const auto& rec : records) {
    const auto src = detail::resolve_source(rec, o);
    auto& table = tables[{src.pollutants, src.climate}];
    if (!table) table = std::make_shared<const ObservationTable>(detail::load_table(src));
    auto loaded = detail::load_station(dir, rec);
    TrainConfig cfg;
    cfg.window = rec.window;
    cfg.train_frac = rec.train_frac;
    cfg.val_frac = rec.val_frac;
    const auto prepared = prepare_station(*table, rec.station_id, cfg, loaded.scaler);
    reports.push_back(evaluate(loaded.model, loaded.scaler, prepared.split.test));
  }
  ctx.out << render_table_text(reports);
  if (!o.csv_out.empty()) detail::write_file(o.csv_out, render_table_csv(reports));

  nlohmann::ordered_json j;
  j["command"] = "eval";
  auto& arr = j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    arr.push_back({{"station_id", r.station_id},
                   {"n_samples", r.n_samples},
                   {"test_mse", r.test_mse},
                   {"mse_pm10", r.mse_pm10},
                   {"mse_pm25", r.mse_pm25},
                   {"rmse", r.rmse},
                   {"rmse_pm10_ugm3", r.rmse_pm10_ugm3},
                   {"rmse_pm25_ugm3", r.rmse_pm25_ugm3}});
  }
  detail::print_summary(ctx.err, j);
  return 0;
}

inline int run_predict(const Options& o, Context& ctx) {
  const auto records = read_manifest(o.registry);
  auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.station_id == o.station; });
  if (it == records.end()) throw data_error("station " + std::to_string(o.station) + " is not in the registry");
  const auto loaded = detail::load_station(std::filesystem::path(o.registry).parent_path(), *it);
  const auto table = impute_missing(detail::load_table(detail::resolve_source(*it, o)));
  const auto series = predict_series(loaded.model, loaded.scaler, table, o.station, parse_day(o.day), it->window);

  std::ostringstream csv;
  write_series_csv(csv, series);
  nlohmann::ordered_json j;
  j["command"] = "predict";
  j["station_id"] = o.station;
  j["day"] = o.day;
  j["rows"] = series.rows.size();
  if (o.out.empty()) {
    ctx.out << csv.str();
    detail::print_summary(ctx.err, j);
  } else {
    detail::write_file(o.out, csv.str());
    j["out"] = o.out;
    detail::print_summary(ctx.out, j);
  }
  return 0;
}

inline int run_plot(const Options& o, Context& ctx) {
  auto in = deepdust::detail::open_input(o.series);
  auto series = read_series_csv(in, o.station < 0 ? 0 : o.station);
  emit_plot(series, o.out);
  nlohmann::ordered_json j;
  j["command"] = "plot";
  j["series"] = o.series;
  j["out"] = o.out;
  j["rows"] = series.rows.size();
  detail::print_summary(ctx.out, j);
  return 0;
}

// Builds the parser. Subcommand callbacks are attached by run(); the app is
// also used on its own to check --help output against the registered flags.
inline std::unique_ptr<CLI::App> build_app(Options& o) {
  auto app = std::make_unique<CLI::App>("Hourly PM10/PM2.5 forecasting with per-station LSTM models", "deepdust");
  app->require_subcommand(1);
  app->allow_extras(false);

  auto add_data = [&](CLI::App* sub, bool required) {
    auto* p = sub->add_option("--pollutants", o.pollutants, "Pollutant CSV (station_id,timestamp,so2,...,pm25)");
    auto* c = sub->add_option("--climate", o.climate, "Climate CSV (timestamp,wind_speed,wind_dir,...)");
    if (required) {
      p->required();
      c->required();
    }
    sub->add_option("--utc-offset", o.utc_offset, "Hours the source timestamps are ahead of UTC (e.g. 9 for KST)");
  };
  auto add_span = [&](CLI::App* sub) {
    sub->add_option("--start", o.start_text, "First hour to use, YYYY-MM-DDTHH:00 (default: earliest record)");
    sub->add_option("--end", o.end_text, "One past the last hour to use (default: after the latest record)");
  };

  auto* synth = app->add_subcommand("synth", "Generate a synthetic 39-station + climate dataset");
  synth->add_option("--out-dir", o.out_dir, "Directory for pollutants.csv and climate.csv")->required();
  synth->add_option("--hours", o.hours, "Number of hours to generate (>= 72)")->capture_default_str();
  synth->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  synth->add_option("--noise", o.noise, "Noise scale (0 disables noise)")->capture_default_str();
  synth->add_option("--o3-coupling", o.o3_coupling, "O3-sunlight coupling strength")->capture_default_str();
  synth->add_option("--o3-lag", o.o3_lag, "Hours O3 lags sunlight")->capture_default_str();
  synth->add_option("--wind-coupling", o.wind_coupling, "PM-wind coupling strength")->capture_default_str();
  synth->add_option("--start", o.start_text, "First generated hour, YYYY-MM-DDTHH:00 (default 2017-01-01T00:00)");
  synth->add_option("--gap-fraction", o.gap_fraction, "Fraction of cells to blank, in [0, 0.5)")->capture_default_str();

  auto* check = app->add_subcommand("check", "Parse, align and impute the input CSVs and report gaps");
  add_data(check, true);
  add_span(check);

  auto* train = app->add_subcommand("train", "Train one model per station and write a registry");
  add_data(train, true);
  add_span(train);
  train->add_option("--out-dir", o.out_dir, "Directory for checkpoints, scalers and registry.jsonl")->required();
  train->add_option("--config", o.config_path, "Flat key = value config file");
  train->add_option("--stations", o.stations, "Comma-separated station ids (default: config, else 1..25)");
  train->add_option("--seed", o.seed, "Random seed (overrides the config)");
  train->add_option("--epochs", o.epochs, "Epoch count (overrides the config)");
  train->add_option("--jobs", o.jobs, "Stations trained in parallel")->capture_default_str();

  auto* eval = app->add_subcommand("eval", "Score every registry model on its test split");
  eval->add_option("--registry", o.registry, "registry.jsonl written by train")->required();
  eval->add_option("--csv", o.csv_out, "Also write the table as CSV to this path");
  add_data(eval, false);

  auto* predict = app->add_subcommand("predict", "Hourly one-step-ahead predictions for one station and day");
  predict->add_option("--registry", o.registry, "registry.jsonl written by train")->required();
  predict->add_option("--station", o.station, "Station id")->required();
  predict->add_option("--day", o.day, "UTC day, YYYY-MM-DD")->required();
  predict->add_option("--out", o.out, "Series CSV path (default: stdout)");
  add_data(predict, false);

  auto* plot = app->add_subcommand("plot", "Render a series CSV as a two-panel SVG");
  plot->add_option("--series", o.series, "Series CSV written by predict")->required();
  plot->add_option("--out", o.out, "SVG output path")->required();
  plot->add_option("--station", o.station, "Station id shown in the panel titles");

  return app;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options opts;
  auto app = build_app(opts);
  try {
    app->parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app->exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app->exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app->exit(e, out, err);
    return 2;
  }
  Context ctx{out, err};
  try {
    const auto* sub = app->get_subcommands().front();
    const auto& name = sub->get_name();
    if (name == "synth") return run_synth(opts, ctx);
    if (name == "check") return run_check(opts, ctx);
    if (name == "train") return run_train(opts, ctx, *sub);
    if (name == "eval") return run_eval(opts, ctx);
    if (name == "predict") return run_predict(opts, ctx);
    if (name == "plot") return run_plot(opts, ctx);
    throw argument_error("unknown command '" + name + "'");
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::kArgument: err << "error[arguments]: " << e.what() << '\n'; return 2;
      case ErrorKind::kData: err << "error[data]: " << e.what() << '\n'; return 3;
      case ErrorKind::kDivergence: err << "error[divergence]: " << e.what() << '\n'; return 4;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error[data]: " << e.what() << '\n';
    return 3;
  }
  return 1;
}

}  // namespace deepdust::cli
