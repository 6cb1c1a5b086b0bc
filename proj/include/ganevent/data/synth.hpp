#pragma once

// Synthetic stand-ins for the mined event corpus and the proprietary sales
// series. Both generators are pure functions of their configuration.

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "ganevent/core/random.hpp"
#include "ganevent/data/events.hpp"
#include "ganevent/data/sales.hpp"

namespace ganevent::data {

struct SynthCorpusConfig {
  std::uint64_t seed = 1;
  std::size_t n_clusters = 5;
  std::size_t min_events_per_day = 3;
  std::size_t max_events_per_day = 15;
  std::size_t n_days = 365;
  std::size_t dimension = 100;
  Date start = Date::from_ymd(2018, 1, 1);
  /// Probability that an event is drawn from the day's theme cluster rather
  /// than uniformly from all clusters.
  double theme_probability = 0.8;
  /// Norm of the within-cluster noise relative to the unit-norm centers.
  double cluster_spread = 0.5;
  /// When nonzero, the last cluster is the theme of exactly this many
  /// randomly chosen days and of no others (it still appears as background).
  std::size_t rare_theme_days = 0;
  double min_link_count = 1.0;
  double max_link_count = 10000.0;
};

struct SynthCorpus {
  EventCalendar calendar;
  std::vector<std::size_t> themes;  // theme cluster of each day
  std::vector<std::vector<double>> centers;
  Date start;

  std::size_t theme_on(Date d) const { return themes.at(static_cast<std::size_t>(d - start)); }
};

inline std::string synthetic_event_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "evt-%07zu", n);
  return buf;
}

inline SynthCorpus synth_corpus(const SynthCorpusConfig& cfg) {
  require(cfg.n_clusters >= 1, "synth_corpus needs at least one cluster");
  require(cfg.dimension >= 2, "synth_corpus needs dimension >= 2");
  require(cfg.min_events_per_day >= 1 && cfg.min_events_per_day <= cfg.max_events_per_day,
          "synth_corpus needs 1 <= min_events_per_day <= max_events_per_day");
  require(cfg.rare_theme_days == 0 || (cfg.n_clusters >= 2 && cfg.rare_theme_days <= cfg.n_days),
          "rare_theme_days needs at least two clusters and at most n_days days");
  require(cfg.min_link_count >= 1.0 && cfg.min_link_count <= cfg.max_link_count, "invalid link count range");

  Rng center_rng(derive_seed(cfg.seed, "synth.centers"));
  Rng theme_rng(derive_seed(cfg.seed, "synth.themes"));
  Rng event_rng(derive_seed(cfg.seed, "synth.events"));

  SynthCorpus out{EventCalendar(cfg.dimension), {}, {}, cfg.start};
  const std::size_t d = cfg.dimension;
  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    std::vector<double> center(d);
    double norm = 0.0;
    for (double& v : center) {
      v = center_rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : center) v /= norm;
    out.centers.push_back(std::move(center));
  }

  const std::size_t common = cfg.rare_theme_days > 0 ? cfg.n_clusters - 1 : cfg.n_clusters;
  out.themes.resize(cfg.n_days);
  for (auto& t : out.themes) t = static_cast<std::size_t>(theme_rng.below(common));
  if (cfg.rare_theme_days > 0)
    for (std::size_t day : theme_rng.sample_without_replacement(cfg.n_days, cfg.rare_theme_days))
      out.themes[day] = cfg.n_clusters - 1;

  const double noise_sd = cfg.cluster_spread / std::sqrt(static_cast<double>(d));
  const double log_lo = std::log(cfg.min_link_count), log_hi = std::log(cfg.max_link_count);
  std::size_t next_id = 0;
  for (std::size_t day = 0; day < cfg.n_days; ++day) {
    const Date date = cfg.start + static_cast<std::int32_t>(day);
    const auto n = static_cast<std::size_t>(event_rng.integer(static_cast<std::int64_t>(cfg.min_events_per_day),
                                                              static_cast<std::int64_t>(cfg.max_events_per_day)));
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t cluster = event_rng.bernoulli(cfg.theme_probability)
                                      ? out.themes[day]
                                      : static_cast<std::size_t>(event_rng.below(cfg.n_clusters));
      Event e;
      e.id = synthetic_event_id(next_id);
      e.title = "synthetic event " + std::to_string(next_id) + " (cluster " + std::to_string(cluster) + ")";
      e.date = date;
      e.category = "cluster_" + std::to_string(cluster);
      e.link_count = static_cast<std::int64_t>(std::floor(std::exp(event_rng.uniform(log_lo, log_hi))));
      e.embedding.resize(d);
      for (std::size_t j = 0; j < d; ++j) e.embedding[j] = out.centers[cluster][j] + event_rng.normal(0.0, noise_sd);
      out.calendar.add(std::move(e));
      ++next_id;
    }
  }
  return out;
}

/// Additive demand impulse triggered on every day themed by a cluster; it
/// decays as amount * exp(-lag / decay_days) and lasts one day when decay is 0.
struct Impact {
  double amount = 0.0;
  double decay_days = 0.0;
};

struct SynthSalesConfig {
  std::uint64_t seed = 1;
  std::string category = "synthetic";
  double base_level = 1000.0;
  double trend_slope = 0.5;   // units per day
  double weekly_amp = 100.0;
  double yearly_amp = 200.0;
  double noise_sd = 20.0;
  std::map<std::size_t, Impact> impact_map;  // theme cluster -> impulse
};

struct SynthSales {
  SalesSeries series;
  std::vector<double> impulses;        // impulse contribution on each day
  std::vector<Date> impulse_days;      // days whose theme triggered an impulse
};

inline SynthSales synth_sales(const SynthSalesConfig& cfg, const SynthCorpus& corpus) {
  const std::size_t n = corpus.themes.size();
  Rng noise_rng(derive_seed(cfg.seed, "synth.sales.noise"));
  SynthSales out{{cfg.category, corpus.start, std::vector<double>(n)}, std::vector<double>(n, 0.0), {}};

  for (std::size_t t = 0; t < n; ++t) {
    auto it = cfg.impact_map.find(corpus.themes[t]);
    if (it == cfg.impact_map.end()) continue;
    const Impact& imp = it->second;
    out.impulse_days.push_back(corpus.start + static_cast<std::int32_t>(t));
    const auto span = imp.decay_days > 0.0 ? static_cast<std::size_t>(std::ceil(5.0 * imp.decay_days)) : 0;
    for (std::size_t lag = 0; lag <= span && t + lag < n; ++lag)
      out.impulses[t + lag] += lag == 0 ? imp.amount : imp.amount * std::exp(-static_cast<double>(lag) / imp.decay_days);
  }

  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    const double level = cfg.base_level + cfg.trend_slope * x + cfg.weekly_amp * std::sin(two_pi * x / 7.0) +
                         cfg.yearly_amp * std::sin(two_pi * x / 365.25);
    const double noise = cfg.noise_sd > 0.0 ? noise_rng.normal(0.0, cfg.noise_sd) : 0.0;
    out.series.values[t] = std::max(0.0, level + noise + out.impulses[t]);
  }
  return out;
}

}  // namespace ganevent::data
