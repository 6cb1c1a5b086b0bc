#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "ganevent/core/checkpoint.hpp"
#include "ganevent/core/optim.hpp"
#include "ganevent/data/csv.hpp"
#include "ganevent/forecast/features.hpp"
#include "ganevent/forecast/lstm.hpp"

namespace ganevent::forecast {

struct ForecastConfig {
  std::size_t window = 30;         // W
  std::size_t input_chunk = 365;   // N
  std::size_t hidden = 404;
  double dropout = 0.3;
  FeatureMode mode = FeatureMode::gan_event;
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  std::size_t batch_size = 32;
  std::size_t chunk_stride = 1;
  std::size_t patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
};

inline void validate(const ForecastConfig& c) {
  require(c.window >= 1, "window W must be at least 1");
  require(c.input_chunk >= c.window, "input_chunk N must be at least the window W");
  require(c.hidden >= 1, "hidden size must be positive");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must lie in [0, 1)");
  require(c.epochs >= 1 && c.batch_size >= 1 && c.chunk_stride >= 1, "epochs, batch_size and chunk_stride must be positive");
  require(c.validation_fraction > 0.0 && c.validation_fraction < 1.0, "validation_fraction must lie in (0, 1)");
  require(c.learning_rate > 0.0 && c.weight_decay >= 0.0, "invalid learning rate or weight decay");
}

struct ForecastEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct ForecastModel {
  ForecastConfig config;
  Lstm lstm;
  SalesScaler scaler;
  std::size_t event_dim = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<ForecastEpochLog> log;
};

namespace detail {

// Model input for target day j: [scaled S_{j-1}, f_j]; day j's own sales are
// the target and never part of its input.
inline std::vector<double> input_row(const std::vector<double>& scaled, const std::vector<std::vector<double>>& features,
                                     std::size_t j) {
  std::vector<double> row{scaled[j - 1]};
  if (!features.empty()) row.insert(row.end(), features[j].begin(), features[j].end());
  return row;
}

// Stacks the inputs of chunks starting at `starts` into one (B x in) tensor per step.
inline std::vector<nn::Tensor> batch_inputs(const std::vector<std::vector<double>>& inputs,
                                            const std::vector<std::size_t>& starts, std::size_t length) {
  const std::size_t width = inputs.front().size();
  std::vector<nn::Tensor> steps;
  steps.reserve(length);
  for (std::size_t k = 0; k < length; ++k) {
    nn::Tensor t = nn::Tensor::zeros(starts.size(), width);
    for (std::size_t b = 0; b < starts.size(); ++b)
      std::copy(inputs[starts[b] + k].begin(), inputs[starts[b] + k].end(),
                t.values().begin() + static_cast<std::ptrdiff_t>(b * width));
    steps.push_back(std::move(t));
  }
  return steps;
}

struct ChunkData {
  std::vector<std::vector<double>> inputs;  // index i holds the input for target day i + 1
  std::vector<double> targets;              // scaled S_{i + 1}
};

inline double chunk_loss(const Lstm& lstm, const ChunkData& data, const std::vector<std::size_t>& starts,
                         std::size_t length, double dropout, Rng* rng, bool training, nn::ParameterRefs* backprop) {
  Tape tape;
  std::vector<Var> xs;
  for (auto& t : batch_inputs(data.inputs, starts, length)) xs.push_back(tape.constant(std::move(t)));
  auto outputs = lstm.forward(tape, xs, dropout, rng, training);
  Var total = tape.constant(nn::Tensor::scalar(0.0));
  for (std::size_t k = 0; k < length; ++k) {
    nn::Tensor y = nn::Tensor::zeros(starts.size(), 1);
    for (std::size_t b = 0; b < starts.size(); ++b) y[b] = data.targets[starts[b] + k];
    total = nn::add(total, nn::sum(nn::square(nn::sub(outputs[k], tape.constant(std::move(y))))));
  }
  Var loss = nn::scale(total, 1.0 / static_cast<double>(starts.size() * length));
  const double value = loss.item();
  if (backprop) {
    nn::zero_grad(*backprop);
    tape.backward(loss);
  }
  return value;
}

}  // namespace detail

/// Teacher-forced next-step training over sliding chunks of N target days.
/// The last `validation_fraction` of chunks (chronologically) is held out for
/// early stopping, and the best-validation parameters are returned.
/// `warm_start` seeds the parameters from an earlier model of the same shape.
inline ForecastModel train_forecaster(const data::SalesSeries& series, const EventFeatures& events,
                                      const ForecastConfig& cfg, const Lstm* warm_start = nullptr) {
  validate(cfg);
  const std::size_t n = series.size();
  const std::size_t N = cfg.input_chunk;
  if (n < N + cfg.window)
    throw ContractError("insufficient history: " + std::to_string(n) + " days, need at least N + W = " +
                        std::to_string(N + cfg.window));
  const bool with_events = cfg.mode != FeatureMode::sales_only;
  if (with_events) require(events.dim > 0, "feature mode " + std::string(to_string(cfg.mode)) + " needs event features");

  ForecastModel model;
  model.config = cfg;
  model.event_dim = with_events ? events.dim : 0;
  model.scaler = SalesScaler::fit(series.values);

  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = model.scaler.scale(series.values[i]);
  std::vector<std::vector<double>> features;
  if (with_events)
    for (std::size_t i = 0; i < n; ++i) features.push_back(events.at(series.date_at(i)));

  detail::ChunkData data;
  for (std::size_t j = 1; j < n; ++j) {
    data.inputs.push_back(detail::input_row(scaled, features, j));
    data.targets.push_back(scaled[j]);
  }

  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + N <= data.inputs.size(); s += cfg.chunk_stride) starts.push_back(s);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.validation_fraction * starts.size())));
  require(starts.size() > n_val, "insufficient history for a train/validation split");
  std::vector<std::size_t> train_starts(starts.begin(), starts.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> val_starts(starts.end() - static_cast<std::ptrdiff_t>(n_val), starts.end());

  Rng init(derive_seed(cfg.seed, "forecast.init"));
  model.lstm = Lstm(1 + model.event_dim, cfg.hidden, init);
  if (warm_start) {
    require(warm_start->input_dim == model.lstm.input_dim && warm_start->hidden == cfg.hidden,
            "warm start model has a different shape");
    model.lstm = *warm_start;
  }
  auto params = model.lstm.parameters();
  nn::AdamW opt({.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay});

  auto validation_loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < val_starts.size(); i += cfg.batch_size) {
      std::vector<std::size_t> batch(val_starts.begin() + static_cast<std::ptrdiff_t>(i),
                                     val_starts.begin() + static_cast<std::ptrdiff_t>(std::min(val_starts.size(), i + cfg.batch_size)));
      total += detail::chunk_loss(model.lstm, data, batch, N, 0.0, nullptr, false, nullptr) * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(val_starts.size());
  };

  std::vector<nn::NamedTensor> best = nn::snapshot(params);
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(derive_seed(cfg.seed, "forecast.epoch"), epoch));
    auto order = train_starts;
    rng.shuffle(order);
    double train_total = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(i),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + cfg.batch_size)));
      train_total += detail::chunk_loss(model.lstm, data, batch, N, cfg.dropout, &rng, true, &params) *
                     static_cast<double>(batch.size());
      opt.step(params);
    }
    const double val = validation_loss();
    model.log.push_back({epoch + 1, train_total / static_cast<double>(order.size()), val});
    if (val < model.best_val_loss) {
      model.best_val_loss = val;
      model.best_epoch = epoch + 1;
      best = nn::snapshot(params);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  nn::restore(params, best);
  return model;
}

/// Single-step prediction from the last N input rows, run from zero state.
inline double predict_next(const ForecastModel& model, const std::vector<double>& scaled,
                           const std::vector<std::vector<double>>& features, std::size_t target) {
  const std::size_t N = model.config.input_chunk;
  std::vector<std::vector<double>> rows;
  rows.reserve(N);
  for (std::size_t j = target + 1 - N; j <= target; ++j) rows.push_back(detail::input_row(scaled, features, j));
  Tape tape;
  std::vector<Var> xs;
  for (const auto& r : rows) xs.push_back(tape.constant(nn::Tensor::row(r)));
  const double out = model.lstm.forward(tape, xs, 0.0, nullptr, false).back().item();
  return std::max(0.0, model.scaler.unscale(out));
}

/// Autoregressive rollout over future_features.size() days (or `steps` days in
/// sales_only mode). Each prediction, clamped at 0, becomes the next step's
/// sales input. Inputs are in sales units; outputs too.
inline std::vector<double> predict_window(const ForecastModel& model, const std::vector<double>& history_sales,
                                          const std::vector<std::vector<double>>& history_features,
                                          const std::vector<std::vector<double>>& future_features, std::size_t steps) {
  const std::size_t N = model.config.input_chunk;
  const bool with_events = model.event_dim > 0;
  require(history_sales.size() >= N, "history shorter than the input chunk N = " + std::to_string(N));
  if (with_events) {
    require(history_features.size() == history_sales.size(), "history features must align with history sales");
    if (future_features.size() < steps) throw ContractError("missing future event features for the prediction window");
    for (const auto& f : future_features)
      require(f.size() == model.event_dim, "future event feature has the wrong dimension");
  }
  std::vector<double> scaled;
  scaled.reserve(history_sales.size() + steps);
  for (double v : history_sales) scaled.push_back(model.scaler.scale(v));
  std::vector<std::vector<double>> features;
  if (with_events) {
    features = history_features;
    features.insert(features.end(), future_features.begin(), future_features.begin() + static_cast<std::ptrdiff_t>(steps));
  }
  std::vector<double> out;
  out.reserve(steps);
  for (std::size_t w = 0; w < steps; ++w) {
    const double y = predict_next(model, scaled, features, history_sales.size() + w);
    out.push_back(y);
    scaled.push_back(model.scaler.scale(y));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: parameters in the checkpoint format plus a JSON sidecar.

inline nlohmann::json to_json(const ForecastConfig& c) {
  return {{"window", c.window},       {"input_chunk", c.input_chunk},
          {"hidden", c.hidden},       {"dropout", c.dropout},
          {"mode", std::string(to_string(c.mode))},
          {"epochs", c.epochs},       {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
          {"chunk_stride", c.chunk_stride}, {"patience", c.patience},
          {"validation_fraction", c.validation_fraction}, {"seed", c.seed}};
}

inline ForecastConfig forecast_config_from_json(const nlohmann::json& j) {
  ForecastConfig c;
  c.window = j.at("window").get<std::size_t>();
  c.input_chunk = j.at("input_chunk").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.mode = feature_mode_from_string(j.at("mode").get<std::string>());
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.chunk_stride = j.at("chunk_stride").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void save_forecaster(const std::filesystem::path& dir, ForecastModel& model) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(dir / "forecaster.ckpt", nn::snapshot(model.lstm.parameters()));
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : model.log) log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  const nlohmann::json sidecar = {{"config", to_json(model.config)},
                                  {"event_dim", model.event_dim},
                                  {"scaler", {{"min", model.scaler.min}, {"range", model.scaler.range}}},
                                  {"best_epoch", model.best_epoch},
                                  {"best_val_loss", model.best_val_loss},
                                  {"log", log}};
  nn::write_file_atomic(dir / "forecaster.json", sidecar.dump(2) + "\n");
}

inline ForecastModel load_forecaster(const std::filesystem::path& dir) {
  const auto path = dir / "forecaster.json";
  if (!std::filesystem::exists(path)) throw IoError("missing " + path.string() + " (produced by forecast)");
  const auto j = nlohmann::json::parse(nn::read_file(path));
  ForecastModel model;
  model.config = forecast_config_from_json(j.at("config"));
  model.event_dim = j.at("event_dim").get<std::size_t>();
  model.scaler = {j.at("scaler").at("min").get<double>(), j.at("scaler").at("range").get<double>()};
  model.best_epoch = j.at("best_epoch").get<std::size_t>();
  model.best_val_loss = j.at("best_val_loss").get<double>();
  for (const auto& e : j.at("log"))
    model.log.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
  Rng rng(0);
  model.lstm = Lstm(1 + model.event_dim, model.config.hidden, rng);
  nn::restore(model.lstm.parameters(), nn::load_checkpoint(dir / "forecaster.ckpt"));
  return model;
}

inline std::string format_predictions(data::Date start, const std::vector<double>& values) {
  return data::format_dated_csv(start, values, "prediction");
}

}  // namespace ganevent::forecast
