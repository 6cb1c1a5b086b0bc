// ganevent: synthesize data, train the event GAN, embed days, forecast,
// evaluate and plot. Run `ganevent <command> --help` for flags.
//
// Exit codes: 0 success, 1 runtime or contract error, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ganevent/data/events.hpp"
#include "ganevent/data/sales.hpp"
#include "ganevent/data/synth.hpp"
#include "ganevent/embedding/day_embedding.hpp"
#include "ganevent/eval/plot.hpp"
#include "ganevent/eval/report.hpp"
#include "ganevent/eval/rolling.hpp"
#include "ganevent/forecast/forecaster.hpp"
#include "ganevent/gan/io.hpp"
#include "ganevent/gan/train.hpp"

namespace fs = std::filesystem;
using namespace ganevent;
using data::Date;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// Output directory handling

/// Exclusive ownership of an output directory for the lifetime of a command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".ganevent.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw IoError("output directory " + dir.string() + " is locked by another command (remove " + path_.string() +
                    " if no command is running)");
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

/// Files are written under a staging directory and moved into the output
/// directory only by commit(), so a failed command leaves no partial artifacts.
class Staging {
 public:
  Staging(const fs::path& out, const std::string& command) : out_(out), dir_(out / (".staging-" + command)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Staging() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  const fs::path& dir() const { return dir_; }

  void write(const std::string& relative, const std::string& text) {
    const auto path = dir_ / relative;
    fs::create_directories(path.parent_path());
    nn::write_file_atomic(path, text);
    entries_.push_back(relative);
  }
  /// Marks a file or directory already created under dir() for commit.
  void adopt(const std::string& relative) { entries_.push_back(relative); }

  void commit() {
    for (const auto& rel : entries_) {
      const auto target = out_ / rel;
      fs::create_directories(target.parent_path());
      fs::remove_all(target);
      fs::rename(dir_ / rel, target);
    }
    entries_.clear();
  }

 private:
  fs::path out_;
  fs::path dir_;
  std::vector<std::string> entries_;
};

fs::path or_default(const std::string& given, const fs::path& fallback) { return given.empty() ? fallback : fs::path(given); }

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw IoError("missing " + path.string() + " (produced by " + producer + ")");
}

Date parse_date_flag(const std::string& text, const std::string& flag) {
  try {
    return Date::parse(text);
  } catch (const Error&) {
    throw UsageError(flag + " expects a date YYYY-MM-DD, got '" + text + "'");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// --------------------------------------------------------------------------
// Flag registration: every flag also reads GANEVENT_<NAME> from the environment.

std::string env_name(const std::string& flag) {
  std::string out = "GANEVENT_";
  for (char c : flag.substr(2)) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  return app->add_option(name, target, help)->envname(env_name(name))->capture_default_str();
}

struct Common {
  std::uint64_t seed = 1;
  std::string out = "run";
  std::string config;
};

void add_common(CLI::App* app, Common& c) {
  flag(app, "--config", c.config, "Flat key = value file; flags and environment win");
  flag(app, "--seed", c.seed, "Seed for every stochastic component");
  flag(app, "--out", c.out, "Run directory holding all artifacts");
}

/// Fills the command's flags that were not given from a flat key = value file.
/// Keys use flag names with '-' or '_'; keys for other commands are ignored,
/// and a [command] section limits its keys to that command.
void apply_config(CLI::App* app, const std::string& path) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == app->get_name())) continue;
    std::string name = item.name;
    std::replace(name.begin(), name.end(), '_', '-');
    if (name == "config") continue;
    CLI::Option* op = app->get_option_no_throw("--" + name);
    if (op == nullptr || op->count() > 0) continue;
    for (const auto& value : item.inputs) op->add_result(value);
    op->run_callback();
  }
}

// --------------------------------------------------------------------------
// synth

struct SynthOptions {
  Common common;
  std::size_t n_days = 1095;
  std::string start = "2017-01-01";
  std::size_t dimension = 100;
  std::size_t clusters = 5;
  std::size_t min_events = 3;
  std::size_t max_events = 15;
  double theme_probability = 0.8;
  double cluster_spread = 0.5;
  long rare_theme_days = -1;  // -1: one day in 30
  double base_level = 1000.0;
  double trend_slope = 0.5;
  double weekly_amp = 100.0;
  double yearly_amp = 200.0;
  double noise_sd = 20.0;
  std::vector<std::string> impacts;
};

std::size_t rare_days(const SynthOptions& o) {
  if (o.rare_theme_days < -1) throw UsageError("--rare-theme-days must be -1 (one day in 30) or non-negative");
  return o.rare_theme_days < 0 ? o.n_days / 30 : static_cast<std::size_t>(o.rare_theme_days);
}

std::map<std::size_t, data::Impact> parse_impacts(const SynthOptions& o) {
  std::map<std::size_t, data::Impact> out;
  if (o.impacts.empty()) {
    if (rare_days(o) > 0) out[o.clusters - 1] = {600.0, 0.0};
    return out;
  }
  for (const auto& text : o.impacts) {
    unsigned long cluster = 0;
    double amount = 0.0, decay = 0.0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%lu:%lf:%lf%c", &cluster, &amount, &decay, &tail) != 3 || cluster >= o.clusters ||
        decay < 0.0)
      throw UsageError("--impact expects CLUSTER:AMOUNT:DECAY with CLUSTER < " + std::to_string(o.clusters) + ", got '" +
                       text + "'");
    out[cluster] = {amount, decay};
  }
  return out;
}

int cmd_synth(const SynthOptions& o) {
  if (o.n_days == 0) throw UsageError("--n-days must be positive");
  const Date start = parse_date_flag(o.start, "--start");
  const auto impacts = parse_impacts(o);
  const fs::path out(o.common.out);
  DirLock lock(out);
  const auto corpus = data::synth_corpus({.seed = o.common.seed,
                                          .n_clusters = o.clusters,
                                          .min_events_per_day = o.min_events,
                                          .max_events_per_day = o.max_events,
                                          .n_days = o.n_days,
                                          .dimension = o.dimension,
                                          .start = start,
                                          .theme_probability = o.theme_probability,
                                          .cluster_spread = o.cluster_spread,
                                          .rare_theme_days = rare_days(o)});
  const auto sales = data::synth_sales({.seed = o.common.seed,
                                        .base_level = o.base_level,
                                        .trend_slope = o.trend_slope,
                                        .weekly_amp = o.weekly_amp,
                                        .yearly_amp = o.yearly_amp,
                                        .noise_sd = o.noise_sd,
                                        .impact_map = impacts},
                                       corpus);
  Staging stage(out, "synth");
  stage.write("events.jsonl", data::format_events(corpus.calendar));
  stage.write("sales.csv", data::format_dated_csv(sales.series.start, sales.series.values, "value"));
  stage.write("impulses.csv", data::format_dated_csv(sales.series.start, sales.impulses, "impulse"));
  stage.commit();
  std::cout << "synth: " << corpus.calendar.size() << " events, " << o.n_days << " days, " << sales.impulse_days.size()
            << " impulse days -> " << out.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// train-gan

struct GanOptions {
  Common common;
  std::string events;
  std::string from, to;
  gan::GanConfig cfg;
  std::string distance = "cosine";
  bool resume = false;
};

data::EventCalendar load_calendar(const fs::path& path) {
  require_artifact(path, "synth");
  auto loaded = data::load_events(path);
  for (const auto& r : loaded.rejections) std::cerr << "warning: " << path.string() << ": rejected line " << r.line << ": " << r.reason << "\n";
  return std::move(loaded.calendar);
}

int cmd_train_gan(GanOptions o) {
  const fs::path out(o.common.out);
  const auto events_path = or_default(o.events, out / "events.jsonl");
  DirLock lock(out);

  std::unique_ptr<gan::GanTrainer> trainer;
  nlohmann::json extra;
  if (o.resume) {
    const auto sidecar = gan::read_gan_sidecar(out / "gan");
    extra = sidecar.value("extra", nlohmann::json::object());
    trainer = gan::load_gan(out / "gan", o.cfg.epochs);
    if (trainer->epochs_done() >= o.cfg.epochs)
      throw ContractError("nothing to resume: " + std::to_string(trainer->epochs_done()) + " epochs already done, --epochs is " +
                          std::to_string(o.cfg.epochs));
  } else {
    o.cfg.seed = o.common.seed;
    o.cfg.distance = nn::distance_from_string(o.distance);
    gan::validate(o.cfg);
    extra = {{"events", events_path.string()}, {"from", o.from}, {"to", o.to}};
  }

  const auto calendar = load_calendar(extra.value("events", events_path.string()));
  if (calendar.empty()) throw ContractError("event file has no events");
  const std::string from_text = extra.value("from", std::string()), to_text = extra.value("to", std::string());
  const Date from = from_text.empty() ? *calendar.first_day() : parse_date_flag(from_text, "--from");
  const Date to = to_text.empty() ? *calendar.last_day() : parse_date_flag(to_text, "--to");
  const auto samples = gan::day_samples(calendar, from, to, o.resume ? trainer->config().lag : o.cfg.lag);
  if (samples.empty()) throw ContractError("no day in " + from.iso() + ".." + to.iso() + " has two or more events");
  if (!trainer) trainer = std::make_unique<gan::GanTrainer>(calendar.dimension(), o.cfg);

  trainer->train(samples, [](const gan::GanEpochLog& e) {
    std::cout << "epoch " << e.epoch;
    if (e.d_loss) std::cout << " d_loss " << *e.d_loss;
    if (e.g_loss) std::cout << " g_loss " << *e.g_loss;
    if (e.rec_loss) std::cout << " rec_loss " << *e.rec_loss;
    std::cout << " days " << e.days << "\n";
  });

  Staging stage(out, "train-gan");
  gan::save_gan(stage.dir() / "gan", *trainer, extra);
  stage.adopt("gan");
  stage.commit();
  std::cout << "train-gan: " << trainer->epochs_done() << " epochs -> " << (out / "gan").string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// embed-days

struct EmbedOptions {
  Common common;
  std::string events, gan_dir, from, to;
  int lag = -1;
};

/// Default day range: the sales series when present, else the event span.
std::pair<Date, Date> day_range(const fs::path& out, const data::EventCalendar& calendar, const std::string& from,
                                const std::string& to) {
  Date a, b;
  if (fs::exists(out / "sales.csv")) {
    const auto sales = data::load_sales(out / "sales.csv");
    a = sales.start;
    b = sales.end();
  } else {
    if (calendar.empty()) throw ContractError("no events and no sales series to take a day range from");
    a = *calendar.first_day();
    b = *calendar.last_day();
  }
  if (!from.empty()) a = parse_date_flag(from, "--from");
  if (!to.empty()) b = parse_date_flag(to, "--to");
  return {a, b};
}

std::vector<embedding::DayEmbedding> compute_embeddings(const fs::path& gan_dir, const data::EventCalendar& calendar,
                                                        Date from, Date to, int lag) {
  const auto sidecar = gan::read_gan_sidecar(gan_dir);
  const int use_lag = lag >= 0 ? lag : sidecar.at("config").at("lag").get<int>();
  const auto generator = gan::load_generator(gan_dir);
  if (generator.dim() != calendar.dimension())
    throw ContractError("generator dimension " + std::to_string(generator.dim()) + " does not match the event dimension " +
                        std::to_string(calendar.dimension()));
  return embedding::embed_range(generator, calendar, from, to, use_lag);
}

int cmd_embed_days(const EmbedOptions& o) {
  const fs::path out(o.common.out);
  DirLock lock(out);
  const auto calendar = load_calendar(or_default(o.events, out / "events.jsonl"));
  const auto [from, to] = day_range(out, calendar, o.from, o.to);
  const auto days = compute_embeddings(or_default(o.gan_dir, out / "gan"), calendar, from, to, o.lag);
  Staging stage(out, "embed-days");
  stage.write("embeddings.csv", embedding::format_embeddings(days));
  stage.commit();
  std::cout << "embed-days: " << days.size() << " days " << from.iso() << ".." << to.iso() << " -> "
            << (out / "embeddings.csv").string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// forecast

struct ForecastOptions {
  Common common;
  std::string sales, events, embeddings, gan_dir;
  std::string mode = "gan_event";
  int test_year = 0;
  std::string predict_start;
  bool from_gan = false;
  int pool_lag = 1;
  std::size_t refit_epochs = 0;
  forecast::ForecastConfig cfg;
};

forecast::EventFeatures feature_source(const ForecastOptions& o, const fs::path& out, forecast::FeatureMode mode,
                                       const data::SalesSeries& sales) {
  switch (mode) {
    case forecast::FeatureMode::sales_only:
      return {};
    case forecast::FeatureMode::gan_event: {
      if (o.from_gan) {
        const auto calendar = load_calendar(or_default(o.events, out / "events.jsonl"));
        return forecast::features_from_embeddings(
            compute_embeddings(or_default(o.gan_dir, out / "gan"), calendar, sales.start, sales.end(), -1));
      }
      return forecast::features_from_embeddings(embedding::load_embeddings(or_default(o.embeddings, out / "embeddings.csv")));
    }
    case forecast::FeatureMode::mean_pool_event:
    case forecast::FeatureMode::weighted_pool_event: {
      const auto calendar = load_calendar(or_default(o.events, out / "events.jsonl"));
      return forecast::pooled_features(calendar, sales.start, sales.end(),
                                       mode == forecast::FeatureMode::weighted_pool_event, o.pool_lag);
    }
  }
  return {};
}

std::string format_windows(const std::vector<eval::MonthWindow>& windows) {
  std::string out = "train_end,predict_start,predict_end\n";
  for (const auto& w : windows) out += w.train_end.iso() + "," + w.predict_start.iso() + "," + w.predict_end.iso() + "\n";
  return out;
}

int cmd_forecast(ForecastOptions o) {
  const fs::path out(o.common.out);
  const auto mode = forecast::feature_mode_from_string(o.mode);
  o.cfg.mode = mode;
  o.cfg.seed = o.common.seed;
  forecast::validate(o.cfg);
  if ((o.test_year != 0) == !o.predict_start.empty())
    throw UsageError("forecast needs exactly one of --test-year (rolling monthly) or --predict-start (single window)");
  DirLock lock(out);
  const auto sales_path = or_default(o.sales, out / "sales.csv");
  require_artifact(sales_path, "synth");
  const auto sales = data::load_sales(sales_path);
  const auto features = feature_source(o, out, mode, sales);
  if (mode != forecast::FeatureMode::sales_only && !features.covers(sales.start, sales.end()))
    throw ContractError("event features do not cover the sales range " + sales.start.iso() + ".." + sales.end().iso() +
                        " (re-run embed-days over that range)");

  auto last = std::make_shared<forecast::ForecastModel>();
  eval::Predictions predictions;
  std::vector<eval::MonthWindow> windows;
  if (o.test_year != 0) {
    auto result = eval::rolling_monthly_eval(sales, o.test_year, eval::forecaster_predictor(features, o.cfg, o.refit_epochs, last));
    predictions = std::move(result.predictions);
    windows = std::move(result.windows);
  } else {
    const Date first = parse_date_flag(o.predict_start, "--predict-start");
    if (first <= sales.start || first > sales.end() + 1)
      throw ContractError("--predict-start must fall after the first sales day and at most one day past the last");
    const auto history = sales.slice(sales.start, first - 1);
    const auto values = eval::forecaster_predictor(features, o.cfg, 0, last)(history, first, o.cfg.window);
    for (std::size_t i = 0; i < values.size(); ++i) predictions[first + static_cast<std::int32_t>(i)] = values[i];
    windows.push_back({first - 1, first, first + static_cast<std::int32_t>(values.size()) - 1});
  }

  std::vector<double> values;
  for (const auto& [d, v] : predictions) values.push_back(v);
  Staging stage(out, "forecast-" + o.mode);
  stage.write("predictions/" + o.mode + ".csv", forecast::format_predictions(predictions.begin()->first, values));
  stage.write("predictions/" + o.mode + ".windows.csv", format_windows(windows));
  forecast::save_forecaster(stage.dir() / "forecasters" / o.mode, *last);
  stage.adopt("forecasters/" + o.mode);
  stage.commit();
  std::cout << "forecast: " << o.mode << ", " << values.size() << " days in " << windows.size() << " window(s) -> "
            << (out / "predictions" / (o.mode + ".csv")).string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  Common common;
  std::string sales;
  std::string models = "sales_only,gan_event,mean_pool_event,weighted_pool_event";
  int test_year = 0;
  std::string ks = "5,10,20";
  std::size_t period = 7;
  std::size_t yearly_period = 0;
  bool signed_residuals = false;
  std::size_t resamples = 10000;
  double alpha = 0.05;
};

eval::Predictions load_predictions(const fs::path& path, const std::string& model) {
  require_artifact(path, "forecast --mode " + model);
  std::ifstream in(path);
  const auto series = data::parse_dated_csv(in, "prediction", model);
  eval::Predictions out;
  for (std::size_t i = 0; i < series.size(); ++i) out[series.date_at(i)] = series.values[i];
  return out;
}

eval::ReportConfig report_config(const EvaluateOptions& o) {
  eval::ReportConfig cfg;
  cfg.ks.clear();
  for (const auto& k : split_list(o.ks)) {
    try {
      cfg.ks.push_back(std::stoul(k));
    } catch (const std::exception&) {
      throw UsageError("--ks expects a comma-separated list of positive integers, got '" + o.ks + "'");
    }
  }
  if (cfg.ks.empty() || std::count(cfg.ks.begin(), cfg.ks.end(), 0u)) throw UsageError("--ks needs positive values");
  cfg.period = o.period;
  cfg.yearly_period = o.yearly_period;
  cfg.signed_residuals = o.signed_residuals;
  cfg.permutation = {o.resamples, o.common.seed};
  cfg.significance = o.alpha;
  return cfg;
}

int cmd_evaluate(const EvaluateOptions& o) {
  const fs::path out(o.common.out);
  const auto names = split_list(o.models);
  if (names.empty()) throw UsageError("--models needs at least one model");
  for (const auto& n : names) forecast::feature_mode_from_string(n);
  const auto cfg = report_config(o);
  DirLock lock(out);
  const auto sales_path = or_default(o.sales, out / "sales.csv");
  require_artifact(sales_path, "synth");
  const auto sales = data::load_sales(sales_path);
  const int year = o.test_year != 0 ? o.test_year : sales.end().year();

  std::map<std::string, eval::Predictions> models;
  for (const auto& n : names) models[n] = load_predictions(out / "predictions" / (n + ".csv"), n);
  eval::EvalReport report;
  eval::add_category(report, sales, year, models, cfg);

  std::string anomalies = "category,K,rank,date\n";
  for (const auto& [category, by_k] : report.anomalies)
    for (const auto& [k, days] : by_k)
      for (std::size_t i = 0; i < days.size(); ++i)
        anomalies += category + "," + std::to_string(k) + "," + std::to_string(i + 1) + "," + days[i].iso() + "\n";
  const auto table = eval::format_report_table(report, o.alpha);
  Staging stage(out, "evaluate");
  stage.write("report.csv", eval::format_report_csv(report));
  stage.write("report.txt", table);
  stage.write("anomalies.csv", anomalies);
  stage.commit();
  std::cout << table;
  return 0;
}

// --------------------------------------------------------------------------
// plot

struct PlotOptions {
  Common common;
  std::string sales;
  std::string models;
  int test_year = 0;
  std::size_t period = 7;
};

std::vector<double> day_axis(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  return x;
}

int cmd_plot(const PlotOptions& o) {
  const fs::path out(o.common.out);
  DirLock lock(out);
  const auto sales_path = or_default(o.sales, out / "sales.csv");
  require_artifact(sales_path, "synth");
  const auto sales = data::load_sales(sales_path);
  const auto d = eval::stl_decompose(sales.values, o.period);
  const auto x = day_axis(sales.size());

  eval::PlotMarkers markers;
  const int year = o.test_year != 0 ? o.test_year : sales.end().year();
  const Date y0 = std::max(sales.start, Date::from_ymd(year, 1, 1));
  const Date y1 = std::min(sales.end(), Date::from_ymd(year, 12, 31));
  if (y0 <= y1) {
    const auto k = std::min<std::size_t>(10, static_cast<std::size_t>(y1 - y0) + 1);
    for (Date t : eval::top_k_anomalies(d.residual, sales.start, k, y0, y1)) markers.x.push_back(t - sales.start);
  }

  Staging stage(out, "plot");
  stage.write("plots/sales.svg", eval::svg_line_chart(sales.category + " sales, top-10 anomalies of " + std::to_string(year),
                                                      {{"sales", x, sales.values}}, markers));
  stage.write("plots/decomposition.svg",
              eval::svg_line_chart("decomposition", {{"trend", x, d.trend, "#1f77b4"},
                                                     {"seasonal", x, d.seasonal, "#2ca02c"},
                                                     {"residual", x, d.residual, "#d62728"}}));
  const auto names = split_list(o.models);
  if (!names.empty() && y0 <= y1) {
    const auto span = static_cast<std::size_t>(y1 - y0) + 1;
    std::vector<double> xs = day_axis(span), actual;
    for (Date t = y0; t <= y1; ++t) actual.push_back(sales.at(t));
    std::vector<eval::PlotLine> lines{{"actual", xs, actual, "#000000"}};
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    for (std::size_t m = 0; m < names.size(); ++m) {
      const auto pred = load_predictions(out / "predictions" / (names[m] + ".csv"), names[m]);
      std::vector<double> px, py;
      for (std::size_t i = 0; i < span; ++i) {
        auto it = pred.find(y0 + static_cast<std::int32_t>(i));
        if (it == pred.end()) continue;
        px.push_back(static_cast<double>(i));
        py.push_back(it->second);
      }
      lines.push_back({names[m], px, py, colors[m % 5]});
    }
    eval::PlotMarkers year_markers;
    for (double v : markers.x) year_markers.x.push_back(v - static_cast<double>(y0 - sales.start));
    stage.write("plots/predictions.svg", eval::svg_line_chart("predictions " + std::to_string(year), lines, year_markers));
  }
  stage.commit();
  std::cout << "plot: -> " << (out / "plots").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-aware sales forecasting: synth, train-gan, embed-days, forecast, evaluate, plot"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic event corpus and sales series");
  add_common(s, synth.common);
  flag(s, "--n-days", synth.n_days, "Days to generate");
  flag(s, "--start", synth.start, "First day");
  flag(s, "--dimension", synth.dimension, "Event embedding dimension");
  flag(s, "--clusters", synth.clusters, "Event clusters (themes)");
  flag(s, "--min-events", synth.min_events, "Fewest events per day");
  flag(s, "--max-events", synth.max_events, "Most events per day");
  flag(s, "--theme-probability", synth.theme_probability, "Chance an event comes from the day's theme");
  flag(s, "--cluster-spread", synth.cluster_spread, "Within-cluster noise norm");
  flag(s, "--rare-theme-days", synth.rare_theme_days, "Days themed by the last cluster (-1: one in 30, 0: none)");
  flag(s, "--base-level", synth.base_level, "Sales level on day 0");
  flag(s, "--trend-slope", synth.trend_slope, "Sales trend per day");
  flag(s, "--weekly-amp", synth.weekly_amp, "Weekly amplitude");
  flag(s, "--yearly-amp", synth.yearly_amp, "Yearly amplitude");
  flag(s, "--noise-sd", synth.noise_sd, "Gaussian noise sd");
  flag(s, "--impact", synth.impacts, "CLUSTER:AMOUNT:DECAY impulse (repeatable; default: last cluster 600:0)");

  GanOptions gan_o;
  auto* g = app.add_subcommand("train-gan", "Train the masked-event generator and discriminator");
  add_common(g, gan_o.common);
  flag(g, "--events", gan_o.events, "Event file (default: OUT/events.jsonl)");
  flag(g, "--from", gan_o.from, "First training day (default: first event day)");
  flag(g, "--to", gan_o.to, "Last training day (default: last event day)");
  flag(g, "--hidden", gan_o.cfg.encoder.hidden, "Encoder width");
  flag(g, "--ff-width", gan_o.cfg.encoder.ff_width, "Feed-forward width");
  flag(g, "--layers", gan_o.cfg.encoder.layers, "Encoder layers");
  flag(g, "--heads", gan_o.cfg.encoder.heads, "Attention heads");
  flag(g, "--mask-fraction", gan_o.cfg.mask_fraction, "Fraction k of events masked per day");
  flag(g, "--lambda-r", gan_o.cfg.lambda_r, "Reconstruction loss weight");
  flag(g, "--lambda-d", gan_o.cfg.lambda_d, "Adversarial loss weight (0 disables the discriminator)");
  flag(g, "--distance", gan_o.distance, "cosine, euclidean or manhattan");
  flag(g, "--use-hausdorff", gan_o.cfg.use_hausdorff, "Hausdorff set loss (false: elementwise)");
  flag(g, "--saturating-g-loss", gan_o.cfg.saturating_g_loss, "Use log(1 - D(G)) for the generator");
  flag(g, "--epochs", gan_o.cfg.epochs, "Total epochs (with --resume: the new total)");
  flag(g, "--batch-size", gan_o.cfg.batch_size, "Days per batch");
  flag(g, "--learning-rate", gan_o.cfg.learning_rate, "AdamW learning rate");
  flag(g, "--weight-decay", gan_o.cfg.weight_decay, "AdamW weight decay");
  flag(g, "--lag", gan_o.cfg.lag, "Days of earlier events joined to each day");
  g->add_flag("--resume", gan_o.resume, "Continue OUT/gan up to --epochs")->envname("GANEVENT_RESUME");

  EmbedOptions emb;
  auto* e = app.add_subcommand("embed-days", "Compute day embeddings with a trained generator");
  add_common(e, emb.common);
  flag(e, "--events", emb.events, "Event file (default: OUT/events.jsonl)");
  flag(e, "--gan", emb.gan_dir, "GAN directory (default: OUT/gan)");
  flag(e, "--from", emb.from, "First day (default: first sales day, else first event day)");
  flag(e, "--to", emb.to, "Last day (default: last sales day, else last event day)");
  flag(e, "--lag", emb.lag, "Event lag (default: the GAN's)");

  ForecastOptions fc;
  auto* f = app.add_subcommand("forecast", "Train the LSTM forecaster and write predictions");
  add_common(f, fc.common);
  flag(f, "--mode", fc.mode, "sales_only, gan_event, mean_pool_event or weighted_pool_event");
  flag(f, "--sales", fc.sales, "Sales file (default: OUT/sales.csv)");
  flag(f, "--events", fc.events, "Event file for pooling modes (default: OUT/events.jsonl)");
  flag(f, "--embeddings", fc.embeddings, "Day embedding cache (default: OUT/embeddings.csv)");
  flag(f, "--gan", fc.gan_dir, "GAN directory for --from-gan (default: OUT/gan)");
  f->add_flag("--from-gan", fc.from_gan, "Recompute day embeddings instead of reading the cache")->envname("GANEVENT_FROM_GAN");
  flag(f, "--test-year", fc.test_year, "Rolling monthly evaluation over this year");
  flag(f, "--predict-start", fc.predict_start, "Single window starting on this day");
  flag(f, "--window", fc.cfg.window, "Window W (single-window mode)");
  flag(f, "--input-chunk", fc.cfg.input_chunk, "Input chunk length N");
  flag(f, "--hidden", fc.cfg.hidden, "LSTM hidden size");
  flag(f, "--dropout", fc.cfg.dropout, "Dropout before the head");
  flag(f, "--epochs", fc.cfg.epochs, "Maximum epochs");
  flag(f, "--refit-epochs", fc.refit_epochs, "Warm-started epochs for months after the first (0: full retrain)");
  flag(f, "--learning-rate", fc.cfg.learning_rate, "AdamW learning rate");
  flag(f, "--weight-decay", fc.cfg.weight_decay, "AdamW weight decay");
  flag(f, "--batch-size", fc.cfg.batch_size, "Chunks per batch");
  flag(f, "--chunk-stride", fc.cfg.chunk_stride, "Days between chunk starts");
  flag(f, "--patience", fc.cfg.patience, "Early-stopping patience");
  flag(f, "--validation-fraction", fc.cfg.validation_fraction, "Trailing fraction of chunks held out");
  flag(f, "--pool-lag", fc.pool_lag, "Event lag for the pooling modes");

  EvaluateOptions ev;
  auto* v = app.add_subcommand("evaluate", "Score predictions on the most anomalous days");
  add_common(v, ev.common);
  flag(v, "--sales", ev.sales, "Sales file (default: OUT/sales.csv)");
  flag(v, "--models", ev.models, "Comma-separated models with OUT/predictions/<model>.csv");
  flag(v, "--test-year", ev.test_year, "Year to score (default: last sales year)");
  flag(v, "--ks", ev.ks, "Comma-separated K values");
  flag(v, "--period", ev.period, "Seasonal period in days");
  flag(v, "--yearly-period", ev.yearly_period, "Second seasonal period (0: off)");
  flag(v, "--signed-residuals", ev.signed_residuals, "Rank by signed instead of absolute residual");
  flag(v, "--resamples", ev.resamples, "Permutation test resamples");
  flag(v, "--alpha", ev.alpha, "Significance level for the table");

  PlotOptions pl;
  auto* p = app.add_subcommand("plot", "Write SVG charts of the series, decomposition and predictions");
  add_common(p, pl.common);
  flag(p, "--sales", pl.sales, "Sales file (default: OUT/sales.csv)");
  flag(p, "--models", pl.models, "Comma-separated models to overlay");
  flag(p, "--test-year", pl.test_year, "Year to chart (default: last sales year)");
  flag(p, "--period", pl.period, "Seasonal period in days");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    const std::pair<CLI::App*, const Common*> commands[] = {{s, &synth.common}, {g, &gan_o.common}, {e, &emb.common},
                                                            {f, &fc.common},   {v, &ev.common},    {p, &pl.common}};
    for (const auto& [sub, common] : commands)
      if (sub->parsed()) apply_config(sub, common->config);
    if (s->parsed()) return cmd_synth(synth);
    if (g->parsed()) return cmd_train_gan(gan_o);
    if (e->parsed()) return cmd_embed_days(emb);
    if (f->parsed()) return cmd_forecast(fc);
    if (v->parsed()) return cmd_evaluate(ev);
    if (p->parsed()) return cmd_plot(pl);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const CLI::Error& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
