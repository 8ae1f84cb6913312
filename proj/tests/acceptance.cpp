// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deepdust/cli.hpp"
#include "deepdust/deepdust.hpp"
#include "support/fixtures.hpp"
#include "support/scalar_lstm.hpp"

namespace {

using namespace deepdust;
namespace fs = std::filesystem;

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (ok) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelShape shape_of(int d, int h) {
  ModelShape s;
  s.input_dim = d;
  s.hidden = h;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "deepdust");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "deepdust %s failed (%d): %s\n", args[1].c_str(), code, err.str().c_str());
  return code;
}

std::shared_ptr<const ObservationTable> synth_table(int hours, std::uint64_t seed, double gaps = 0) {
  SynthConfig sc;
  sc.n_hours = hours;
  sc.seed = seed;
  auto d = generate(sc);
  if (gaps > 0) d = inject_gaps(d, gaps, seed + 1);
  return std::make_shared<const ObservationTable>(align_hourly(d.pollutants, d.climate, sc.start, sc.start + hours));
}

// Analytic gradients against central differences of the independent scalar
// reference, H=4, D=6, T=5, five seeds.
Check gradient_check() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = init_params<double>(seed, shape_of(6, 4));
    std::mt19937_64 rng(seed + 100);
    const auto w = testing::random_window(rng, 5, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<double> target{u(rng), u(rng)};
    ForwardCache<double> cache;
    const auto y = model_forward(m, std::span<const double>(w), cache);
    const auto g = model_backward(m, cache, mse_loss_grad<double>(y, {target[0], target[1]}));
    const auto fd = testing::scalar_fd_gradient({m.values().begin(), m.values().end()}, 6, 4, 3, w, target, 1e-5);
    worst = std::max(worst, testing::max_relative_error(g.values(), fd));
  }
  const double secs = seconds_since(t0);
  c.require(worst < 1e-4, "max relative error " + fmt("%.3e", worst) + " >= 1e-4");
  c.require(secs < 10, "took " + fmt("%.1f", secs) + " s");
  c.note("max relative error " + fmt("%.3e", worst) + " over 5 seeds, " + fmt("%.2f", secs) + " s");
  return c;
}

Check forward_oracle() {
  Check c;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto [d, h, steps] : {std::tuple{6, 4, 5}, std::tuple{243, 42, 48}}) {
      const auto m = init_params<double>(seed, shape_of(d, h));
      std::mt19937_64 rng(seed);
      const auto w = testing::random_window(rng, steps, d);
      const auto y = model_forward(m, std::span<const double>(w));
      const auto ref = testing::ScalarLstm(m.values(), d, h, 3).forward(w);
      worst = std::max({worst, std::abs(y[0] - ref[0]), std::abs(y[1] - ref[1])});
    }
  }
  c.require(worst <= 1e-12, "max |diff| " + fmt("%.3e", worst));
  c.note("max |diff| " + fmt("%.3e", worst) + " (tiny and full-size models, 5 seeds each)");
  return c;
}

// Eight full-size windows, one update per sample, default Adam settings.
Check overfit() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto table = synth_table(100, 21);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.seed = 3;
  const auto prep = prepare_station(*table, 5, cfg);
  const auto eight = prep.split.train.slice(0, 8);
  const auto r = train_station(eight, eight, 5, cfg);
  const double final_loss = dataset_loss(r.model, eight);
  int first_below = 0;
  for (std::size_t e = 0; e < r.report.val_loss.size(); ++e) {
    if (r.report.val_loss[e] < 1e-4) {
      first_below = static_cast<int>(e) + 1;
      break;
    }
  }
  const double secs = seconds_since(t0);
  c.require(final_loss < 1e-4, "train loss " + fmt("%.3e", final_loss) + " after 500 epochs");
  c.require(secs < 60, "took " + fmt("%.1f", secs) + " s");
  c.note("train loss " + fmt("%.3e", final_loss) + ", below 1e-4 from epoch " + std::to_string(first_below) + ", " +
         fmt("%.1f", secs) + " s");
  return c;
}

// Full-size model on 2000 synthetic hours must beat predicting the test mean.
Check learnability() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto table = synth_table(2000, 7, 0.02);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 42;
  const int station = 6;
  const auto prep = prepare_station(*table, station, cfg);
  const auto r = train_station(prep.split.train, prep.split.val, station, cfg);
  const auto report = evaluate(r.model, prep.scaler, prep.split.test);

  const auto& test = prep.split.test;
  double m10 = 0, m25 = 0;
  for (std::size_t k = 0; k < test.size(); ++k) m10 += test.target(k).pm10, m25 += test.target(k).pm25;
  m10 /= static_cast<double>(test.size());
  m25 /= static_cast<double>(test.size());
  double var = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto y = test.target(k);
    var += (y.pm10 - m10) * (y.pm10 - m10) + (y.pm25 - m25) * (y.pm25 - m25);
  }
  var /= static_cast<double>(test.size());
  const double secs = seconds_since(t0);
  c.require(report.test_mse < var, "test MSE " + fmt("%.4e", report.test_mse) + " >= target variance " + fmt("%.4e", var));
  c.require(secs < 300, "took " + fmt("%.1f", secs) + " s");
  c.note("test MSE " + fmt("%.4e", report.test_mse) + " vs target variance " + fmt("%.4e", var) + " (" +
         std::to_string(test.size()) + " test windows, " + fmt("%.1f", secs) + " s)");
  return c;
}

Check shapes() {
  Check c;
  c.require(kFeatureDim == 243, "feature dim");
  auto probe = [&](const ObservationTable& raw, const std::string& label) {
    const auto table = impute_missing(raw);
    const auto f = std::make_shared<const FeatureMatrix>(transform(fit_scaler(table), table));
    c.require(f->data.size() == table.rows * 243, label + ": feature row width");
    const auto ds = make_windows(f, 3);
    c.require(ds.size() == table.rows - 48, label + ": N != len - 48");
    c.require(ds.input(0).size() == 48u * 243, label + ": window is not 48 x 243");
    c.require(ds.feature_dim() == 243 && ds.window() == 48, label + ": window dims");
    const auto y = model_forward(init_params<double>(1), ds.input(ds.size() - 1));
    c.require(y.size() == 2, label + ": output size");
  };
  probe(*synth_table(300, 4, 0.1), "synthetic");
  probe(testing::make_table(49, [](std::size_t r, int col) {
          return col == climate_column(kWindDirection) ? 3.0 : static_cast<double>(r + col);
        }),
        "hand-built 49 rows");
  c.note("243 features, (48, 243) windows, 2 outputs, N = len - 48 on synthetic and hand-built tables");
  return c;
}

Check table_format() {
  Check c;
  c.require(format_table_value(3.040e-4) == "30.40", "3.040e-4 renders as " + format_table_value(3.040e-4));
  const std::vector<double> reference{30.40, 26.62, 29.32, 44.09, 26.41, 28.96, 46.41, 45.26, 43.48,
                                      31.71, 44.32, 27.37, 28.71, 46.24, 26.27, 31.67, 31.59, 35.51,
                                      23.24, 20.35, 31.71, 29.29, 47.86, 33.57, 32.88};
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < reference.size(); ++i) rows.push_back({static_cast<int>(i) + 1, reference[i] * kTableUnit});
  const auto csv = render_table_csv(rows);
  const auto back = parse_table_csv(csv);
  c.require(back.size() == 25, "row count");
  for (std::size_t i = 0; i < back.size() && i < reference.size(); ++i) {
    c.require(format_table_value(back[i].mse) == fmt("%.2f", reference[i]), "station " + std::to_string(i + 1));
  }
  c.require(render_table_csv(back) == csv, "CSV re-render differs");
  c.note("3.040e-4 -> 30.40; 25 reference values round-trip through the CSV");
  return c;
}

// Full CLI pipeline twice (serial, then --jobs 25 with reversed station
// order) must produce byte-identical artifacts.
Check determinism() {
  Check c;
  const auto root = fs::temp_directory_path() / "deepdust_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "small.toml") << "epochs = 2\nbatch_size = 16\nwindow = 12\nhidden = 8\nlearning_rate = 0.005\n";

  std::vector<std::string> files;
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / ("run" + std::to_string(run));
    const auto data = dir / "data";
    std::string stations;
    for (int s = 1; s <= 25; ++s) {
      const int id = run == 0 ? s : 26 - s;
      stations += (stations.empty() ? "" : ",") + std::to_string(id);
    }
    bool ok = run_cli({"synth", "--out-dir", data.string(), "--hours", "240", "--seed", "8", "--gap-fraction", "0.05"}) == 0;
    ok = ok && run_cli({"train", "--out-dir", (dir / "models").string(), "--config", (root / "small.toml").string(),
                        "--stations", stations, "--jobs", run == 0 ? "1" : "25", "--pollutants",
                        (data / "pollutants.csv").string(), "--climate", (data / "climate.csv").string()}) == 0;
    ok = ok && run_cli({"eval", "--registry", (dir / "models/registry.jsonl").string(), "--csv",
                        (dir / "table.csv").string()}) == 0;
    ok = ok && run_cli({"predict", "--registry", (dir / "models/registry.jsonl").string(), "--station", "6", "--day",
                        "2017-01-09", "--out", (dir / "series.csv").string()}) == 0;
    ok = ok && run_cli({"plot", "--series", (dir / "series.csv").string(), "--out", (dir / "plot.svg").string(),
                        "--station", "6"}) == 0;
    c.require(ok, "pipeline run " + std::to_string(run) + " failed");
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "run0")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root / "run0");
    const auto a = slurp(entry.path());
    auto b = slurp(root / "run1" / rel);
    if (rel == fs::path("models/registry.jsonl")) {
      // Absolute data paths differ by run directory only.
      const auto from = (root / "run1").string(), to = (root / "run0").string();
      for (auto pos = b.find(from); pos != std::string::npos; pos = b.find(from, pos)) b.replace(pos, from.size(), to);
    }
    c.require(a == b, rel.string() + " differs");
    ++compared;
  }
  c.require(compared >= 25 * 2 + 6, "only " + std::to_string(compared) + " files produced");
  fs::remove_all(root);
  c.note(std::to_string(compared) + " files byte-identical across reruns (serial vs --jobs 25)");
  return c;
}

Check data_integrity() {
  Check c;
  // Scaler sees only hours touched by training windows: changing later hours
  // leaves it and every training window unchanged.
  TrainConfig cfg;
  const auto base = synth_table(400, 31);
  auto poisoned = std::make_shared<ObservationTable>(*base);
  const auto fit_rows = training_rows(base->rows, cfg.window, cfg.train_frac, cfg.val_frac);
  for (std::size_t r = fit_rows; r < poisoned->rows; ++r)
    for (int col = 0; col < kFeatureDim; ++col)
      if (col != climate_column(kWindDirection)) poisoned->at(r, col) *= 50.0;
  const auto a = prepare_station(*base, 4, cfg);
  const auto b = prepare_station(*poisoned, 4, cfg);
  c.require(a.scaler == b.scaler, "scaler depends on validation/test hours");
  c.require(!(a.scaler == fit_scaler(impute_missing(*poisoned))), "full-range fit indistinguishable");
  bool same_train = a.split.train.size() == b.split.train.size();
  for (std::size_t k = 0; same_train && k < a.split.train.size(); ++k) {
    const auto x = a.split.train.input(k), y = b.split.train.input(k);
    same_train = std::equal(x.begin(), x.end(), y.begin()) && a.split.train.target(k).pm10 == b.split.train.target(k).pm10;
  }
  c.require(same_train, "training windows depend on later hours");

  auto column_table = [](std::vector<double> v, int col) {
    return testing::make_table(v.size(), [&](std::size_t r, int cc) { return cc == col ? v[r] : 1.0; });
  };
  const int col = pollutant_column(2, kNO2);
  c.require(impute_missing(column_table({10, NAN, 30}, col)).at(1, col) == 20.0, "[10, NaN, 30] -> 20");
  c.require(impute_missing(column_table({NAN, 5, 5}, col)).at(0, col) == 5.0, "[NaN, 5, 5] -> 5");
  bool threw = false;
  try {
    impute_missing(column_table({NAN, NAN, NAN}, col));
  } catch (const Error&) {
    threw = true;
  }
  c.require(threw, "all-missing column accepted");

  SynthConfig sc;
  sc.n_hours = 120;
  const auto d = inject_gaps(generate(sc), 0.1, 5);
  std::stringstream p1, c1, p2, c2;
  write_pollutant_csv(p1, d.pollutants);
  write_climate_csv(c1, d.climate);
  const auto pol = parse_pollutant_csv(p1);
  const auto cli = parse_climate_csv(c1);
  c.require(pol == d.pollutants && cli == d.climate, "parse(serialize(x)) != x");
  write_pollutant_csv(p2, pol);
  write_climate_csv(c2, cli);
  c.require(p2.str() == p1.str() && c2.str() == c1.str(), "re-serialized bytes differ");
  c.note("scaler and training windows independent of later hours; imputation fixtures; CSV round-trip bit-exact");
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"gradient check vs finite differences", gradient_check},
      {"forward pass vs scalar reference", forward_oracle},
      {"overfit 8 samples", overfit},
      {"learnability on synthetic data", learnability},
      {"shape invariants", shapes},
      {"table formatting and round-trip", table_format},
      {"determinism of artifacts", determinism},
      {"leakage, imputation, ingest round-trip", data_integrity},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %d. %s: %s\n", c.ok ? "PASS" : "FAIL", index, name.c_str(), c.detail.c_str());
    std::fflush(stdout);
    failures += c.ok ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
