#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "ganevent/core/error.hpp"
#include "ganevent/data/date.hpp"
#include "ganevent/data/sales.hpp"

namespace ganevent::eval {

/// Forecast values keyed by date.
using Predictions = std::map<data::Date, double>;

namespace detail {

inline double predicted_at(const Predictions& predictions, data::Date d) {
  auto it = predictions.find(d);
  if (it == predictions.end()) throw ContractError("no prediction for " + d.iso());
  return it->second;
}

}  // namespace detail

/// |y - y_hat| on each day of `days`, in the given order.
inline std::vector<double> absolute_errors(const data::SalesSeries& actual, const Predictions& predicted,
                                           const std::vector<data::Date>& days) {
  std::vector<double> out;
  out.reserve(days.size());
  for (data::Date d : days) out.push_back(std::abs(actual.at(d) - detail::predicted_at(predicted, d)));
  return out;
}

/// Mean absolute error restricted to `days`.
inline double mae_at_k(const data::SalesSeries& actual, const Predictions& predicted,
                       const std::vector<data::Date>& days) {
  require(!days.empty(), "MAE over an empty day set");
  double s = 0.0;
  for (double e : absolute_errors(actual, predicted, days)) s += e;
  return s / static_cast<double>(days.size());
}

/// sum |y - y_hat| / sum |y| over `days`; empty when the actuals sum to zero.
inline std::optional<double> wmape_at_k(const data::SalesSeries& actual, const Predictions& predicted,
                                        const std::vector<data::Date>& days) {
  require(!days.empty(), "wMAPE over an empty day set");
  double err = 0.0, scale = 0.0;
  for (data::Date d : days) {
    const double y = actual.at(d);
    err += std::abs(y - detail::predicted_at(predicted, d));
    scale += std::abs(y);
  }
  if (scale <= 0.0) return std::nullopt;
  return err / scale;
}

}  // namespace ganevent::eval
