#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ganevent/data/csv.hpp"
#include "ganevent/eval/metrics.hpp"
#include "ganevent/eval/permutation.hpp"
#include "ganevent/eval/stl.hpp"

namespace ganevent::eval {

struct ReportConfig {
  std::vector<std::size_t> ks{5, 10, 20};
  std::size_t period = 7;
  std::size_t yearly_period = 0;  // 0 disables the yearly pass
  bool signed_residuals = false;
  PermutationOptions permutation{};
  double significance = 0.05;
};

struct ReportRow {
  std::string category;
  std::string model;
  std::size_t k = 0;
  double mae = 0.0;
  std::optional<double> wmape;
  std::optional<double> p_value_vs_best;  // absent for the best model and single-model reports

  bool significant(double alpha) const { return p_value_vs_best && *p_value_vs_best < alpha; }
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::map<std::string, std::map<std::size_t, std::vector<data::Date>>> anomalies;  // category -> K -> days

  const ReportRow& row(const std::string& category, const std::string& model, std::size_t k) const {
    for (const auto& r : rows)
      if (r.category == category && r.model == model && r.k == k) return r;
    throw ContractError("no report row for " + category + "/" + model + "/K=" + std::to_string(k));
  }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Anomalous days of `year`: decompose the whole series, then rank the
/// residuals inside the year.
inline std::map<std::size_t, std::vector<data::Date>> anomalous_days(const data::SalesSeries& series, int year,
                                                                     const ReportConfig& cfg) {
  const auto d = cfg.yearly_period > 0 ? stl_decompose_two_periods(series.values, cfg.period, cfg.yearly_period)
                                       : stl_decompose(series.values, cfg.period);
  std::map<std::size_t, std::vector<data::Date>> out;
  for (std::size_t k : cfg.ks)
    out[k] = top_k_anomalies(d.residual, series.start, k, data::Date::from_ymd(year, 1, 1),
                             data::Date::from_ymd(year, 12, 31), cfg.signed_residuals);
  return out;
}

/// Adds one category's rows. For each K the model with the lowest wMAPE
/// (MAE when wMAPE is missing) is the reference; every other model gets the
/// one-tailed p-value that the reference's per-day errors are lower.
inline void add_category(EvalReport& report, const data::SalesSeries& actual, int year,
                         const std::map<std::string, Predictions>& models, const ReportConfig& cfg) {
  require(!models.empty(), "evaluation needs at least one model");
  const auto days = anomalous_days(actual, year, cfg);
  report.anomalies[actual.category] = days;
  for (std::size_t k : cfg.ks) {
    const auto& d = days.at(k);
    std::vector<ReportRow> rows;
    for (const auto& [name, pred] : models)
      rows.push_back({actual.category, name, k, mae_at_k(actual, pred, d), wmape_at_k(actual, pred, d), std::nullopt});
    auto key = [](const ReportRow& r) { return r.wmape.value_or(r.mae); };
    const auto best = std::min_element(rows.begin(), rows.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    if (rows.size() >= 2) {
      const auto best_errors = absolute_errors(actual, models.at(best->model), d);
      for (auto& r : rows) {
        if (&r == &*best) continue;
        r.p_value_vs_best = paired_permutation_test(best_errors, absolute_errors(actual, models.at(r.model), d), cfg.permutation);
      }
    }
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
}

inline std::string format_report_csv(const EvalReport& report) {
  std::string out = "category,model,K,MAE,wMAPE,p_value_vs_best\n";
  for (const auto& r : report.rows) {
    out += r.category + "," + r.model + "," + std::to_string(r.k) + "," + data::format_double(r.mae) + ",";
    if (r.wmape) out += data::format_double(*r.wmape);
    out += ",";
    if (r.p_value_vs_best) out += data::format_double(*r.p_value_vs_best);
    out += "\n";
  }
  return out;
}

inline EvalReport parse_report_csv(std::istream& in) {
  const auto csv = data::read_csv(in, {"category", "model", "K", "MAE", "wMAPE", "p_value_vs_best"});
  EvalReport report;
  for (const auto& [line, f] : csv.rows) {
    ReportRow r;
    r.category = f[0];
    r.model = f[1];
    r.k = static_cast<std::size_t>(data::parse_double(f[2], line));
    r.mae = data::parse_double(f[3], line);
    if (!f[4].empty()) r.wmape = data::parse_double(f[4], line);
    if (!f[5].empty()) r.p_value_vs_best = data::parse_double(f[5], line);
    report.rows.push_back(std::move(r));
  }
  return report;
}

/// Fixed-width table; significant differences from the reference carry a '*'.
inline std::string format_report_table(const EvalReport& report, double alpha = 0.05) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %-22s %4s %12s %10s %10s\n", "category", "model", "K", "MAE", "wMAPE", "p");
  out << line;
  for (const auto& r : report.rows) {
    const std::string wmape = r.wmape ? data::format_double(std::round(*r.wmape * 1e4) / 1e4) : "missing";
    std::string p = "-";
    if (r.p_value_vs_best) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f%s", *r.p_value_vs_best, r.significant(alpha) ? "*" : "");
      p = buf;
    }
    std::snprintf(line, sizeof line, "%-16s %-22s %4zu %12.3f %10s %10s\n", r.category.c_str(), r.model.c_str(), r.k,
                  r.mae, wmape.c_str(), p.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace ganevent::eval
