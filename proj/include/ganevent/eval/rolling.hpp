#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ganevent/eval/metrics.hpp"
#include "ganevent/forecast/forecaster.hpp"

namespace ganevent::eval {

/// Predicts `days` values starting at `first`, given all sales strictly
/// before `first` (the history ends the day before).
using Predictor = std::function<std::vector<double>(const data::SalesSeries& history, data::Date first, std::size_t days)>;

struct MonthWindow {
  data::Date train_end;
  data::Date predict_start;
  data::Date predict_end;
};

struct RollingResult {
  Predictions predictions;
  std::vector<MonthWindow> windows;
};

/// For each month of `test_year`: fit on everything through the previous
/// month, then predict every day of the month in one rollout.
inline RollingResult rolling_monthly_eval(const data::SalesSeries& series, int test_year, const Predictor& predict) {
  const data::Date first = data::Date::from_ymd(test_year, 1, 1);
  const data::Date last = data::Date::from_ymd(test_year, 12, 31);
  if (series.empty() || series.start + 365 > first)
    throw ContractError("rolling evaluation needs at least one year of history before " + std::to_string(test_year));
  if (series.end() < last) throw ContractError("series ends before the end of test year " + std::to_string(test_year));

  RollingResult out;
  for (unsigned m = 1; m <= 12; ++m) {
    const data::Date start = data::Date::from_ymd(test_year, m, 1);
    const auto days = data::days_in_month(test_year, m);
    const MonthWindow w{start - 1, start, start + static_cast<std::int32_t>(days) - 1};
    const auto history = series.slice(series.start, w.train_end);
    const auto values = predict(history, start, days);
    if (values.size() != days)
      throw ContractError("predictor returned " + std::to_string(values.size()) + " values for a " +
                          std::to_string(days) + "-day month");
    for (std::size_t i = 0; i < days; ++i) out.predictions[start + static_cast<std::int32_t>(i)] = values[i];
    out.windows.push_back(w);
  }
  return out;
}

/// Trains the forecaster on the given history for every call and rolls it
/// out over the requested days with the known event features. With
/// `refit_epochs` > 0, calls after the first start from the previous call's
/// parameters and train for that many epochs, so calls must come in date order.
/// `last`, when given, receives the most recently trained model.
inline Predictor forecaster_predictor(const forecast::EventFeatures& events, const forecast::ForecastConfig& cfg,
                                      std::size_t refit_epochs = 0,
                                      std::shared_ptr<forecast::ForecastModel> last = nullptr) {
  auto previous = std::make_shared<std::optional<forecast::Lstm>>();
  return [&events, cfg, refit_epochs, previous, last](const data::SalesSeries& history, data::Date first,
                                                      std::size_t days) {
    auto run = cfg;
    const forecast::Lstm* warm = nullptr;
    if (refit_epochs > 0 && previous->has_value()) {
      run.epochs = refit_epochs;
      warm = &**previous;
    }
    const auto model = forecast::train_forecaster(history, events, run, warm);
    if (refit_epochs > 0) *previous = model.lstm;
    if (last) *last = model;
    std::vector<std::vector<double>> past, future;
    if (cfg.mode != forecast::FeatureMode::sales_only) {
      for (std::size_t i = 0; i < history.size(); ++i) past.push_back(events.at(history.date_at(i)));
      for (std::size_t i = 0; i < days; ++i) future.push_back(events.at(first + static_cast<std::int32_t>(i)));
    }
    return forecast::predict_window(model, history.values, past, future, days);
  };
}

}  // namespace ganevent::eval
