#pragma once

// Additive trend/seasonal/residual decomposition: the trend is a centered
// moving average over one period and the seasonal term is the per-phase mean
// of the detrended series, re-centered to zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ganevent/core/error.hpp"
#include "ganevent/data/date.hpp"

namespace ganevent::eval {

struct Decomposition {
  std::vector<double> trend;
  std::vector<double> seasonal;
  std::vector<double> residual;
  std::size_t period = 0;
};

/// Centered moving average over `period` points. Even periods use the 2xP
/// filter with half weights on both ends. Points closer than period/2 to an
/// edge repeat the nearest full-window value.
inline std::vector<double> centered_moving_average(std::span<const double> x, std::size_t period) {
  const std::size_t n = x.size();
  const std::size_t half = period / 2;
  require(period >= 1 && n > 2 * half, "series too short for the moving-average window");
  std::vector<double> trend(n);
  const bool even = period % 2 == 0;
  for (std::size_t i = half; i + half < n; ++i) {
    double s = 0.0;
    if (even) {
      s = 0.5 * (x[i - half] + x[i + half]);
      for (std::size_t j = i - half + 1; j < i + half; ++j) s += x[j];
    } else {
      for (std::size_t j = i - half; j <= i + half; ++j) s += x[j];
    }
    trend[i] = s / static_cast<double>(period);
  }
  for (std::size_t i = 0; i < half; ++i) trend[i] = trend[half];
  for (std::size_t i = n - half; i < n; ++i) trend[i] = trend[n - half - 1];
  return trend;
}

/// Zero-mean per-phase means of `detrended`, computed over the interior
/// points [lo, hi) and expanded to the full length.
inline std::vector<double> phase_means(std::span<const double> detrended, std::size_t period, std::size_t lo,
                                       std::size_t hi) {
  std::vector<double> sum(period, 0.0);
  std::vector<std::size_t> count(period, 0);
  for (std::size_t i = lo; i < hi; ++i) {
    sum[i % period] += detrended[i];
    ++count[i % period];
  }
  std::vector<double> phase(period, 0.0);
  for (std::size_t p = 0; p < period; ++p) phase[p] = count[p] ? sum[p] / static_cast<double>(count[p]) : 0.0;
  const double centre = std::accumulate(phase.begin(), phase.end(), 0.0) / static_cast<double>(period);
  for (double& v : phase) v -= centre;
  std::vector<double> out(detrended.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phase[i % period];
  return out;
}

inline Decomposition stl_decompose(std::span<const double> x, std::size_t period = 7) {
  require(period >= 2, "seasonal period must be at least 2");
  if (x.size() < 2 * period)
    throw ContractError("decomposition needs at least two periods (" + std::to_string(2 * period) +
                        " points), got " + std::to_string(x.size()));
  Decomposition d;
  d.period = period;
  d.trend = centered_moving_average(x, period);
  std::vector<double> detrended(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) detrended[i] = x[i] - d.trend[i];
  const std::size_t half = period / 2;
  d.seasonal = phase_means(detrended, period, half, x.size() - half);
  d.residual.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d.residual[i] = x[i] - d.trend[i] - d.seasonal[i];
  return d;
}

/// Two-pass variant: the trend is averaged over the long period, then the
/// long and short seasonal terms are extracted in turn. Needs two long periods.
inline Decomposition stl_decompose_two_periods(std::span<const double> x, std::size_t period,
                                               std::size_t long_period) {
  require(long_period > period, "long period must exceed the short period");
  if (x.size() < 2 * long_period) throw ContractError("series too short for the long seasonal period");
  Decomposition d;
  d.period = period;
  d.trend = centered_moving_average(x, long_period);
  const std::size_t half = long_period / 2;
  std::vector<double> rest(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) rest[i] = x[i] - d.trend[i];
  const auto yearly = phase_means(rest, long_period, half, x.size() - half);
  for (std::size_t i = 0; i < x.size(); ++i) rest[i] -= yearly[i];
  const auto weekly = phase_means(rest, period, half, x.size() - half);
  d.seasonal.resize(x.size());
  d.residual.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    d.seasonal[i] = yearly[i] + weekly[i];
    d.residual[i] = x[i] - d.trend[i] - d.seasonal[i];
  }
  return d;
}

/// The k dates in [from, to] with the largest |residual| (or largest signed
/// residual), in descending order; ties go to the earlier date.
inline std::vector<data::Date> top_k_anomalies(std::span<const double> residual, data::Date start, std::size_t k,
                                               data::Date from, data::Date to, bool signed_residuals = false) {
  const data::Date end = start + static_cast<std::int32_t>(residual.size()) - 1;
  require(!residual.empty() && from >= start && to <= end && from <= to, "anomaly range outside the residual series");
  const auto lo = static_cast<std::size_t>(from - start);
  const auto hi = static_cast<std::size_t>(to - start);
  require(k <= hi - lo + 1, "k exceeds the number of days in the range");
  std::vector<std::size_t> idx(hi - lo + 1);
  std::iota(idx.begin(), idx.end(), lo);
  auto score = [&](std::size_t i) { return signed_residuals ? residual[i] : std::abs(residual[i]); };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  std::vector<data::Date> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(start + static_cast<std::int32_t>(idx[i]));
  return out;
}

}  // namespace ganevent::eval
