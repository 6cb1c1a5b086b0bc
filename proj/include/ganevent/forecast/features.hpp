#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ganevent/data/events.hpp"
#include "ganevent/data/sales.hpp"
#include "ganevent/embedding/day_embedding.hpp"

namespace ganevent::forecast {

enum class FeatureMode { sales_only, gan_event, mean_pool_event, weighted_pool_event };

inline std::string_view to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::sales_only: return "sales_only";
    case FeatureMode::gan_event: return "gan_event";
    case FeatureMode::mean_pool_event: return "mean_pool_event";
    case FeatureMode::weighted_pool_event: return "weighted_pool_event";
  }
  return "?";
}

inline FeatureMode feature_mode_from_string(std::string_view s) {
  for (auto m : {FeatureMode::sales_only, FeatureMode::gan_event, FeatureMode::mean_pool_event,
                 FeatureMode::weighted_pool_event})
    if (s == to_string(m)) return m;
  throw ContractError("unknown feature mode '" + std::string(s) +
                      "' (expected sales_only, gan_event, mean_pool_event or weighted_pool_event)");
}

/// Per-day event feature vectors keyed by date. Empty for sales_only.
struct EventFeatures {
  std::size_t dim = 0;
  std::map<data::Date, std::vector<double>> by_date;

  const std::vector<double>& at(data::Date d) const {
    auto it = by_date.find(d);
    if (it == by_date.end()) throw ContractError("no event feature for " + d.iso());
    return it->second;
  }
  bool covers(data::Date from, data::Date to) const {
    for (data::Date d = from; d <= to; ++d)
      if (!by_date.count(d)) return false;
    return true;
  }
};

inline EventFeatures features_from_embeddings(const std::vector<embedding::DayEmbedding>& days) {
  EventFeatures out;
  for (const auto& day : days) {
    if (out.dim == 0) out.dim = day.vector.size();
    require(day.vector.size() == out.dim, "day embeddings of mixed dimension");
    out.by_date[day.date] = day.vector;
  }
  return out;
}

/// Average (or link-count weighted average) of the raw event vectors of
/// day_event_set(t, lag). Empty days map to zeros; a day whose link counts
/// are all zero falls back to the plain mean.
inline EventFeatures pooled_features(const data::EventCalendar& calendar, data::Date from, data::Date to, bool weighted,
                                     int lag = 1) {
  require(from <= to, "pooled_features needs from <= to");
  EventFeatures out{calendar.dimension(), {}};
  for (data::Date t = from; t <= to; ++t) {
    std::vector<double> v(out.dim, 0.0);
    const auto events = data::day_event_set(calendar, t, lag);
    double total = 0.0;
    if (weighted)
      for (const auto& e : events) total += static_cast<double>(e.link_count);
    const bool use_weights = weighted && total > 0.0;
    for (const auto& e : events) {
      const double w = use_weights ? static_cast<double>(e.link_count) / total : 1.0 / static_cast<double>(events.size());
      for (std::size_t j = 0; j < out.dim; ++j) v[j] += w * e.embedding[j];
    }
    out.by_date.emplace(t, std::move(v));
  }
  return out;
}

/// Min-max scaling fitted on the training split.
struct SalesScaler {
  double min = 0.0;
  double range = 1.0;

  static SalesScaler fit(const std::vector<double>& values) {
    require(!values.empty(), "cannot fit a scaler on no values");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return {*lo, *hi > *lo ? *hi - *lo : 1.0};
  }
  double scale(double v) const { return (v - min) / range; }
  double unscale(double v) const { return v * range + min; }
};

/// One row per day of the series: [scaled S_t] or [scaled S_t, f_t].
inline std::vector<std::vector<double>> build_features(const data::SalesSeries& series, const EventFeatures& events,
                                                       FeatureMode mode, const SalesScaler& scaler) {
  std::vector<std::vector<double>> rows;
  rows.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<double> row{scaler.scale(series.values[i])};
    if (mode != FeatureMode::sales_only) {
      const auto& f = events.at(series.date_at(i));
      row.insert(row.end(), f.begin(), f.end());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ganevent::forecast
