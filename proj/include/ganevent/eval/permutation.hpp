#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ganevent/core/error.hpp"
#include "ganevent/core/random.hpp"

namespace ganevent::eval {

/// Paired t statistic of the differences. A zero-variance sample maps to
/// -inf, 0 or +inf by the sign of its mean.
inline double paired_t_statistic(std::span<const double> diffs) {
  const double n = static_cast<double>(diffs.size());
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double se = sd / std::sqrt(n);
  if (se == 0.0 || se < 1e-12 * std::abs(mean)) {
    if (mean == 0.0) return 0.0;
    return mean < 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }
  return mean / se;
}

struct PermutationOptions {
  std::size_t n_resamples = 10000;
  std::uint64_t seed = 0;
};

/// One-tailed sign-flip permutation test of the paired t statistic for the
/// alternative mean(errors_a) < mean(errors_b).
///
/// When 2^n <= n_resamples every sign assignment is enumerated and the
/// p-value is the exact fraction with t <= t_observed. Otherwise random
/// flips are drawn and p = (hits + 1) / (n_resamples + 1).
inline double paired_permutation_test(std::span<const double> errors_a, std::span<const double> errors_b,
                                      const PermutationOptions& options = {}) {
  if (errors_a.size() != errors_b.size()) throw ContractError("paired test needs equal-length samples");
  require(errors_a.size() >= 2, "paired test needs at least two pairs");
  const std::size_t n = errors_a.size();
  std::vector<double> diffs(n);
  for (std::size_t i = 0; i < n; ++i) diffs[i] = errors_a[i] - errors_b[i];
  const double observed = paired_t_statistic(diffs);
  const double tolerance = 1e-12 * std::max(1.0, std::isfinite(observed) ? std::abs(observed) : 1.0);
  auto as_extreme = [&](double t) { return t <= observed + tolerance; };

  std::vector<double> flipped(n);
  if (n < 63 && (std::uint64_t{1} << n) <= options.n_resamples) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      for (std::size_t i = 0; i < n; ++i) flipped[i] = (mask >> i) & 1u ? -diffs[i] : diffs[i];
      if (as_extreme(paired_t_statistic(flipped))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  Rng rng(derive_seed(options.seed, "permutation"));
  std::uint64_t hits = 0;
  for (std::size_t r = 0; r < options.n_resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) flipped[i] = (rng.next_u64() >> 63) ? -diffs[i] : diffs[i];
    if (as_extreme(paired_t_statistic(flipped))) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(options.n_resamples + 1);
}

}  // namespace ganevent::eval
