#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <numbers>

#include "ganevent/core/random.hpp"
#include "ganevent/data/synth.hpp"
#include "ganevent/eval/metrics.hpp"
#include "ganevent/eval/plot.hpp"
#include "ganevent/eval/report.hpp"
#include "ganevent/eval/rolling.hpp"
#include "ganevent/eval/permutation.hpp"
#include "ganevent/eval/stl.hpp"

using namespace ganevent;
using namespace ganevent::eval;
using data::Date;

namespace {

const Date kStart = Date::from_ymd(2019, 1, 1);

data::SalesSeries series(std::vector<double> v) { return {"c", kStart, std::move(v)}; }

Predictions predictions(const std::vector<double>& v) {
  Predictions p;
  for (std::size_t i = 0; i < v.size(); ++i) p[kStart + static_cast<std::int32_t>(i)] = v[i];
  return p;
}

std::vector<Date> first_days(std::size_t n) {
  std::vector<Date> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(kStart + static_cast<std::int32_t>(i));
  return out;
}

// Reference p-value by recursive enumeration of sign vectors, with the
// statistic computed from running sums.
double enumerated_p(const std::vector<double>& d) {
  const std::size_t n = d.size();
  auto t_of = [n](double s, double ss) {
    const double mean = s / n;
    const double var = (ss - n * mean * mean) / (n - 1);
    if (var <= 1e-18 * std::max(1.0, ss)) return mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    return mean / std::sqrt(var / n);
  };
  double ss = 0.0, s0 = 0.0;
  for (double v : d) {
    s0 += v;
    ss += v * v;
  }
  const double observed = t_of(s0, ss);
  std::size_t hits = 0, total = 0;
  std::function<void(std::size_t, double)> rec = [&](std::size_t i, double s) {
    if (i == n) {
      ++total;
      if (t_of(s, ss) <= observed + 1e-9) ++hits;
      return;
    }
    rec(i + 1, s + d[i]);
    rec(i + 1, s - d[i]);
  };
  rec(0, 0.0);
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("decomposition of a pure weekly sine leaves no residual", "[evaluation][stl]") {
  std::vector<double> x(70);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 10.0 * std::sin(2.0 * std::numbers::pi * i / 7.0);
  auto d = stl_decompose(x, 7);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(d.residual[i]) < 1e-9);
    CHECK(std::abs(d.trend[i]) < 1e-9);
  }
}

TEST_CASE("decomposition of a linear ramp puts everything in the trend", "[evaluation][stl]") {
  std::vector<double> x(50);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 + 2.0 * i;
  auto d = stl_decompose(x, 7);
  for (std::size_t i = 3; i + 3 < x.size(); ++i) {
    CHECK(d.trend[i] == Catch::Approx(x[i]));
    CHECK(std::abs(d.residual[i]) < 1e-9);
    CHECK(std::abs(d.seasonal[i]) < 1e-9);
  }
}

TEST_CASE("even periods use the half-weight filter", "[evaluation][stl]") {
  std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  auto t = centered_moving_average(x, 4);
  // (0.5*1 + 2 + 3 + 4 + 0.5*5) / 4 = 3
  CHECK(t[2] == Catch::Approx(3.0));
  CHECK(t[0] == t[2]);
  CHECK(t[7] == t[5]);
}

TEST_CASE("the components always add back to the series", "[evaluation][stl][property]") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(14 + rng.below(60));
    for (double& v : x) v = rng.normal(100.0, 30.0);
    auto d = stl_decompose(x, 7);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(d.trend[i] + d.seasonal[i] + d.residual[i] == Catch::Approx(x[i]).margin(1e-9));
    double season = 0.0;
    for (std::size_t p = 0; p < 7; ++p) season += d.seasonal[p];
    CHECK(std::abs(season) < 1e-9);
  }
}

TEST_CASE("short series are rejected", "[evaluation][stl]") {
  std::vector<double> x(13, 1.0);
  CHECK_THROWS_AS(stl_decompose(x, 7), ContractError);
}

TEST_CASE("two-period decomposition removes a yearly and weekly sine", "[evaluation][stl]") {
  std::vector<double> x(3 * 364);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = 500.0 + 40.0 * std::sin(2.0 * std::numbers::pi * i / 7.0) + 80.0 * std::sin(2.0 * std::numbers::pi * i / 364.0);
  auto d = stl_decompose_two_periods(x, 7, 364);
  for (std::size_t i = 182; i + 182 < x.size(); ++i) CHECK(std::abs(d.residual[i]) < 1e-6);
}

TEST_CASE("top-K anomalies", "[evaluation][topk]") {
  SECTION("a single spike is ranked first") {
    std::vector<double> r(30, 0.1);
    r[17] = -50.0;
    auto top = top_k_anomalies(r, kStart, 1, kStart, kStart + 29);
    CHECK(top == std::vector<Date>{kStart + 17});
    CHECK(top_k_anomalies(r, kStart, 1, kStart, kStart + 29, true).front() != kStart + 17);
  }
  SECTION("ties go to the earlier date") {
    std::vector<double> r{0.0, 5.0, -5.0, 5.0, 1.0};
    auto top = top_k_anomalies(r, kStart, 3, kStart, kStart + 4);
    CHECK(top == std::vector<Date>{kStart + 1, kStart + 2, kStart + 3});
  }
  SECTION("K equal to the range returns every day") {
    std::vector<double> r{3.0, 1.0, 2.0};
    auto top = top_k_anomalies(r, kStart, 3, kStart, kStart + 2);
    CHECK(top == std::vector<Date>{kStart, kStart + 2, kStart + 1});
  }
  SECTION("the range restricts the candidates") {
    std::vector<double> r{100.0, 1.0, 2.0, 3.0};
    auto top = top_k_anomalies(r, kStart, 2, kStart + 1, kStart + 3);
    CHECK(top == std::vector<Date>{kStart + 3, kStart + 2});
    CHECK_THROWS_AS(top_k_anomalies(r, kStart, 4, kStart + 1, kStart + 3), ContractError);
  }
}

TEST_CASE("MAE and wMAPE examples", "[evaluation][metrics]") {
  auto y = series({10.0, 20.0});
  auto days = first_days(2);
  auto p = predictions({12.0, 18.0});
  CHECK(mae_at_k(y, p, days) == Catch::Approx(2.0));
  CHECK(*wmape_at_k(y, p, days) == Catch::Approx(4.0 / 30.0));
  CHECK(*wmape_at_k(y, predictions({0.0, 0.0}), days) == Catch::Approx(1.0));
  CHECK(mae_at_k(y, predictions({10.0, 20.0}), days) == 0.0);
  CHECK_FALSE(wmape_at_k(series({0.0, 0.0}), p, days).has_value());
  CHECK_THROWS_AS(mae_at_k(y, p, {}), ContractError);
  CHECK_THROWS_AS(mae_at_k(y, predictions({1.0}), days), ContractError);
}

TEST_CASE("metric properties", "[evaluation][metrics][property]") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<double> yv(n), pv(n);
    for (std::size_t i = 0; i < n; ++i) {
      yv[i] = rng.uniform(0.0, 100.0);
      pv[i] = rng.uniform(0.0, 100.0);
    }
    auto days = first_days(n);
    const double mae = mae_at_k(series(yv), predictions(pv), days);
    const double wmape = *wmape_at_k(series(yv), predictions(pv), days);
    CHECK(mae >= 0.0);

    auto reversed = days;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(mae_at_k(series(yv), predictions(pv), reversed) == Catch::Approx(mae));
    CHECK(*wmape_at_k(series(yv), predictions(pv), reversed) == Catch::Approx(wmape));

    const double c = rng.uniform(0.1, 10.0);
    auto ys = yv, ps = pv;
    for (std::size_t i = 0; i < n; ++i) {
      ys[i] *= c;
      ps[i] *= c;
    }
    CHECK(mae_at_k(series(ys), predictions(ps), days) == Catch::Approx(c * mae));
    CHECK(*wmape_at_k(series(ys), predictions(ps), days) == Catch::Approx(wmape));

    // Shrinking or growing every error by c scales wMAPE by |c|.
    const double k = rng.uniform(-3.0, 3.0);
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = yv[i] + k * (pv[i] - yv[i]);
    CHECK(*wmape_at_k(series(yv), predictions(shifted), days) == Catch::Approx(std::abs(k) * wmape).margin(1e-12));
  }
}

TEST_CASE("paired permutation test examples", "[evaluation][permutation]") {
  SECTION("identical errors give p = 1") {
    std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK(paired_permutation_test(a, a) == 1.0);
    std::vector<double> big(40, 3.0);
    CHECK(paired_permutation_test(big, big) == 1.0);
  }
  SECTION("uniformly smaller errors give a tiny p") {
    Rng rng(9);
    std::vector<double> a(30), b(30);
    for (std::size_t i = 0; i < 30; ++i) {
      a[i] = rng.uniform(0.0, 1.0);
      b[i] = a[i] + 5.0 + rng.uniform(0.0, 1.0);
    }
    CHECK(paired_permutation_test(a, b, {.n_resamples = 10000, .seed = 1}) < 0.001);
    CHECK(paired_permutation_test(b, a, {.n_resamples = 10000, .seed = 1}) > 0.99);
  }
  SECTION("mismatched lengths and single pairs are contract errors") {
    std::vector<double> a{1.0, 2.0}, b{1.0};
    CHECK_THROWS_AS(paired_permutation_test(a, b), ContractError);
    CHECK_THROWS_AS(paired_permutation_test(b, b), ContractError);
  }
  SECTION("a fixed seed reproduces the Monte Carlo p-value") {
    Rng rng(4);
    std::vector<double> a(25), b(25);
    for (std::size_t i = 0; i < 25; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    CHECK(paired_permutation_test(a, b, {.n_resamples = 2000, .seed = 7}) ==
          paired_permutation_test(a, b, {.n_resamples = 2000, .seed = 7}));
  }
}

TEST_CASE("small samples match exhaustive enumeration", "[evaluation][permutation][oracle]") {
  Rng rng(21);
  for (std::size_t n : {2u, 3u, 4u, 6u, 8u, 10u}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> a(n), b(n), d(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.uniform(0.0, 10.0);
        b[i] = rng.uniform(0.0, 10.0);
        d[i] = a[i] - b[i];
      }
      INFO("n = " << n << " trial " << trial);
      CHECK(paired_permutation_test(a, b) == Catch::Approx(enumerated_p(d)).margin(1e-12));
    }
  }
  // n = 4 with a fixed example: differences all negative means only the
  // all-negative assignment (1 of 16) is as extreme.
  std::vector<double> a{1.0, 2.0, 3.0, 4.0}, b{2.0, 4.0, 6.0, 8.0};
  CHECK(paired_permutation_test(a, b) == Catch::Approx(1.0 / 16.0));
}

TEST_CASE("the Monte Carlo p-value converges to the exact one", "[evaluation][permutation][property]") {
  Rng rng(33);
  std::vector<double> a(14), b(14), d(14);
  for (std::size_t i = 0; i < 14; ++i) {
    a[i] = rng.uniform(0.0, 10.0);
    b[i] = a[i] + rng.normal(0.8, 2.0);
    d[i] = a[i] - b[i];
  }
  const double exact = enumerated_p(d);
  const double mc = paired_permutation_test(a, b, {.n_resamples = 10000, .seed = 3});
  CHECK(std::abs(mc - exact) < 0.015);
}

TEST_CASE("planted impulses stand out in the residual", "[evaluation][stl][synthetic]") {
  auto corpus = data::synth_corpus({.seed = 6, .min_events_per_day = 1, .max_events_per_day = 2, .n_days = 730,
                                    .dimension = 4, .rare_theme_days = 10});
  auto sales = data::synth_sales({.seed = 6, .noise_sd = 5.0, .impact_map = {{4, {400.0, 0.0}}}}, corpus);
  REQUIRE(sales.impulse_days.size() == 10);
  const auto d = stl_decompose(sales.series.values, 7);
  std::vector<double> abs_res;
  for (double r : d.residual) abs_res.push_back(std::abs(r));
  auto sorted = abs_res;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (Date day : sales.impulse_days) {
    INFO(day.iso() << " residual " << abs_res[sales.series.index_of(day)] << " median " << median);
    CHECK(abs_res[sales.series.index_of(day)] >= 5.0 * median);
  }
}

TEST_CASE("rolling monthly protocol", "[evaluation][rolling]") {
  const Date start = Date::from_ymd(2017, 1, 1);
  std::vector<double> v(3 * 365 + 1);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 100.0 + std::sin(static_cast<double>(i)) * 10.0 + (i % 37 == 0 ? 80.0 : 0.0);
  const data::SalesSeries s{"c", start, v};

  std::vector<std::pair<Date, Date>> seen;  // (history end, first predicted day)
  Predictor oracle = [&](const data::SalesSeries& history, Date first, std::size_t days) {
    seen.emplace_back(history.end(), first);
    std::vector<double> out;
    for (std::size_t i = 0; i < days; ++i) out.push_back(s.at(first + static_cast<std::int32_t>(i)));
    return out;
  };
  const auto result = rolling_monthly_eval(s, 2019, oracle);
  REQUIRE(result.windows.size() == 12);
  CHECK(result.predictions.size() == 365);
  for (std::size_t m = 0; m < 12; ++m) {
    const auto& w = result.windows[m];
    CHECK(w.train_end < w.predict_start);
    CHECK(seen[m].first == w.train_end);
    CHECK(seen[m].second == w.predict_start);
    CHECK(w.predict_start.month() == m + 1);
    CHECK(w.predict_end.month() == m + 1);
    CHECK((w.predict_end + 1).month() != m + 1);
  }

  EvalReport report;
  add_category(report, s, 2019, {{"oracle", result.predictions}}, {});
  REQUIRE(report.rows.size() == 3);
  for (const auto& r : report.rows) {
    CHECK(r.mae == 0.0);
    CHECK(*r.wmape == 0.0);
    CHECK_FALSE(r.p_value_vs_best.has_value());
  }
  for (std::size_t k : {5u, 10u, 20u}) CHECK(report.anomalies.at("c").at(k).size() == k);

  SECTION("too little history is a contract error") {
    CHECK_THROWS_AS(rolling_monthly_eval(s, 2017, oracle), ContractError);
    CHECK_THROWS_AS(rolling_monthly_eval(s, 2020, oracle), ContractError);
  }
  SECTION("a predictor returning the wrong length is a contract error") {
    Predictor short_one = [](const data::SalesSeries&, Date, std::size_t) { return std::vector<double>(3, 0.0); };
    CHECK_THROWS_AS(rolling_monthly_eval(s, 2019, short_one), ContractError);
  }
}

TEST_CASE("evaluation report rows and p-values", "[evaluation][report]") {
  const Date start = Date::from_ymd(2018, 1, 1);
  Rng rng(3);
  std::vector<double> v(730);
  for (double& x : v) x = 200.0 + rng.normal(0.0, 10.0);
  const data::SalesSeries s{"toys", start, v};
  Predictions good, bad;
  for (std::size_t i = 0; i < v.size(); ++i) {
    good[start + static_cast<std::int32_t>(i)] = v[i] + 1.0;
    bad[start + static_cast<std::int32_t>(i)] = v[i] + 30.0;
  }
  EvalReport report;
  add_category(report, s, 2019, {{"bad", bad}, {"good", good}}, {});
  REQUIRE(report.rows.size() == 6);
  for (std::size_t k : {5u, 10u, 20u}) {
    CHECK(report.row("toys", "good", k).mae == Catch::Approx(1.0));
    CHECK(report.row("toys", "bad", k).mae == Catch::Approx(30.0));
    CHECK_FALSE(report.row("toys", "good", k).p_value_vs_best.has_value());
    CHECK(report.row("toys", "bad", k).p_value_vs_best.value() < 0.05);
  }
  const auto& days = report.anomalies.at("toys").at(20);
  CHECK(std::all_of(days.begin(), days.end(), [](Date d) { return d.year() == 2019; }));

  std::istringstream in(format_report_csv(report));
  const auto back = parse_report_csv(in);
  CHECK(back.rows == report.rows);
  const auto table = format_report_table(report);
  CHECK(table.find("good") != std::string::npos);
  CHECK(table.find('*') != std::string::npos);
  CHECK_THROWS_AS(add_category(report, s, 2019, {}, {}), ContractError);
}

TEST_CASE("SVG line charts", "[evaluation][plot]") {
  const auto svg = svg_line_chart("sales <test>", {{"a", {0, 1, 2}, {1, 3, 2}}, {"b", {0, 2}, {2, 2}, "#000"}},
                                  {{1.0}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("sales &lt;test&gt;") != std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK_THROWS_AS(svg_line_chart("x", {{"a", {0, 1}, {1}}}), ContractError);
  CHECK_THROWS_AS(svg_line_chart("x", {}), ContractError);
}
