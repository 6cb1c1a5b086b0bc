#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "ganevent/core/autodiff.hpp"
#include "ganevent/data/events.hpp"
#include "ganevent/data/sales.hpp"
#include "ganevent/data/synth.hpp"
#include "ganevent/eval/stl.hpp"

using namespace ganevent;
using namespace ganevent::data;

namespace {

std::string event_line(const std::string& id, const std::string& date, std::vector<double> emb = {0.1, 0.2, 0.3}) {
  return event_to_json(Event{id, "t " + id, Date::parse(date), "Sport", 5, std::move(emb)}).dump() + "\n";
}

Event make_event(const std::string& id, Date date) { return Event{id, id, date, "c", 1, {1.0, 0.0}}; }

double mean_pairwise_cosine(const std::vector<Event>& a, const std::vector<Event>& b, bool same_set) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = same_set ? i + 1 : 0; j < b.size(); ++j) {
      s += nn::cosine_similarity(a[i].embedding, b[j].embedding);
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST_CASE("load_events examples", "[event-data][load]") {
  SECTION("empty file gives an empty calendar") {
    std::istringstream in("");
    auto loaded = parse_events(in);
    CHECK(loaded.calendar.empty());
    CHECK(loaded.rejections.empty());
  }
  SECTION("an event before 1980 is rejected with a report") {
    std::istringstream in(event_line("a", "2001-09-11") + event_line("b", "1980-01-01") +
                          event_line("old", "1979-05-01") + event_line("c", "2020-12-31"));
    auto loaded = parse_events(in);
    CHECK(loaded.calendar.size() == 3);
    REQUIRE(loaded.rejections.size() == 1);
    CHECK(loaded.rejections[0].line == 3);
    CHECK(loaded.rejections[0].reason.find("1979-05-01") != std::string::npos);
  }
  SECTION("wrong embedding dimension is rejected") {
    std::istringstream in(event_line("a", "2001-09-11") + event_line("b", "2001-09-12", {1.0, 2.0}));
    auto loaded = parse_events(in);
    CHECK(loaded.calendar.size() == 1);
    CHECK(loaded.calendar.dimension() == 3);
    REQUIRE(loaded.rejections.size() == 1);
    CHECK(loaded.rejections[0].line == 2);
  }
  SECTION("declared dimension applies from the first line") {
    std::istringstream in(event_line("a", "2001-09-11"));
    auto loaded = parse_events(in, {.dimension = 100});
    CHECK(loaded.calendar.empty());
    CHECK(loaded.rejections.size() == 1);
  }
  SECTION("malformed line names its line number") {
    std::istringstream in(event_line("a", "2001-09-11") + "{\"id\": \"b\", \"title\": oops}\n");
    try {
      parse_events(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    std::string text = event_line("a", "2001-12-30");
    text.replace(text.find("2001-12-30"), 10, "2001-13-40");
    std::istringstream in2(text);
    CHECK_THROWS_AS(parse_events(in2), ParseError);
  }
  SECTION("missing file is an I/O error") {
    CHECK_THROWS_AS(load_events("/nonexistent/events.jsonl"), IoError);
  }
}

TEST_CASE("a pre-filtered corpus of 16,766 events loads without rejections", "[event-data][load]") {
  SynthCorpusConfig cfg;
  cfg.seed = 3;
  cfg.dimension = 4;
  cfg.min_events_per_day = 2;
  cfg.max_events_per_day = 2;
  cfg.n_days = 8383;
  cfg.start = Date::from_ymd(1980, 1, 1);
  auto corpus = synth_corpus(cfg);
  REQUIRE(*corpus.calendar.last_day() <= kCorpusLastDay);
  std::istringstream in(format_events(corpus.calendar));
  auto loaded = parse_events(in);
  CHECK(loaded.calendar.size() == 16766);
  CHECK(loaded.rejections.empty());
}

TEST_CASE("save and load round-trip a calendar exactly", "[event-data][roundtrip]") {
  auto corpus = synth_corpus({.seed = 5, .n_days = 30, .dimension = 6});
  const auto path = std::filesystem::temp_directory_path() / "ganevent_events_roundtrip.jsonl";
  save_events(path, corpus.calendar);
  auto loaded = load_events(path);
  std::filesystem::remove(path);
  std::vector<Event> a, b;
  corpus.calendar.for_each([&](const Event& e) { a.push_back(e); });
  loaded.calendar.for_each([&](const Event& e) { b.push_back(e); });
  CHECK(a == b);
  CHECK(format_events(loaded.calendar) == format_events(corpus.calendar));
}

TEST_CASE("day_event_set examples", "[event-data][day-set]") {
  const Date t = Date::from_ymd(2010, 6, 15);
  EventCalendar cal(2);
  SECTION("no events on t or t-1") {
    cal.add(make_event("X", t - 2));
    CHECK(day_event_set(cal, t).empty());
  }
  SECTION("union of t-1 and t") {
    cal.add(make_event("B", t));
    cal.add(make_event("A", t - 1));
    auto set = day_event_set(cal, t);
    REQUIRE(set.size() == 2);
    CHECK(set[0].id == "A");
    CHECK(set[1].id == "B");
  }
  SECTION("duplicate ingestion across days deduplicates by id") {
    cal.add(make_event("C", t - 1));
    cal.add(make_event("C", t));
    auto set = day_event_set(cal, t);
    REQUIRE(set.size() == 1);
    CHECK(set[0].date == t);
  }
  SECTION("lag is configurable") {
    cal.add(make_event("D", t - 2));
    CHECK(day_event_set(cal, t, 2).size() == 1);
    CHECK(day_event_set(cal, t, 0).empty());
  }
}

TEST_CASE("day_event_set contains every same-day event and nothing older than t-1", "[event-data][property]") {
  auto corpus = synth_corpus({.seed = 8, .n_days = 60, .dimension = 3});
  for (Date t = corpus.start; t <= corpus.start + 60; ++t) {
    auto set = day_event_set(corpus.calendar, t);
    std::set<std::string> ids;
    for (const auto& e : set) {
      ids.insert(e.id);
      CHECK((e.date == t || e.date == t - 1));
    }
    for (const auto& e : corpus.calendar.on(t)) CHECK(ids.count(e.id) == 1);
    CHECK(std::is_sorted(set.begin(), set.end(), [](const Event& a, const Event& b) { return a.id < b.id; }));
  }
}

TEST_CASE("calendar iteration covers every stored event once", "[event-data][calendar]") {
  auto corpus = synth_corpus({.seed = 2, .n_days = 40, .dimension = 3});
  std::set<std::string> ids;
  std::size_t visits = 0;
  corpus.calendar.for_each([&](const Event& e) {
    ids.insert(e.id);
    ++visits;
  });
  CHECK(visits == corpus.calendar.size());
  CHECK(ids.size() == visits);
  for (Date t = corpus.start; t < corpus.start + 40; ++t)
    for (const auto& e : corpus.calendar.on(t)) CHECK(e.date == t);
}

TEST_CASE("synth_corpus", "[event-data][synth]") {
  SECTION("fixed seed is bitwise reproducible") {
    SynthCorpusConfig cfg{.seed = 77, .n_days = 50, .dimension = 10};
    CHECK(format_events(synth_corpus(cfg).calendar) == format_events(synth_corpus(cfg).calendar));
    cfg.seed = 78;
    CHECK(format_events(synth_corpus(cfg).calendar) != format_events(synth_corpus({.seed = 77, .n_days = 50, .dimension = 10}).calendar));
  }
  SECTION("days hold 3 to 15 events by default") {
    auto corpus = synth_corpus({.seed = 1, .n_days = 100, .dimension = 4});
    for (Date t = corpus.start; t < corpus.start + 100; ++t) {
      CHECK(corpus.calendar.on(t).size() >= 3);
      CHECK(corpus.calendar.on(t).size() <= 15);
    }
  }
  SECTION("one cluster: within-day variance equals the cluster variance") {
    const std::size_t d = 50;
    const double spread = 0.5;
    auto corpus = synth_corpus({.seed = 4, .n_clusters = 1, .n_days = 200, .dimension = d, .cluster_spread = spread});
    double total = 0.0;
    std::size_t n = 0;
    for (Date t = corpus.start; t < corpus.start + 200; ++t) {
      const auto& events = corpus.calendar.on(t);
      for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (const auto& e : events) mu += e.embedding[j];
        mu /= static_cast<double>(events.size());
        double ss = 0.0;
        for (const auto& e : events) ss += (e.embedding[j] - mu) * (e.embedding[j] - mu);
        total += ss;
        n += events.size() - 1;
      }
      for (std::size_t day = 0; day < corpus.themes.size(); ++day) CHECK(corpus.themes[day] == 0);
    }
    const double cluster_variance = spread * spread / static_cast<double>(d);
    CHECK(total / static_cast<double>(n) == Catch::Approx(cluster_variance).epsilon(0.05));
  }
  SECTION("five clusters: within-day similarity beats across-day by at least 0.1") {
    auto corpus = synth_corpus({.seed = 6, .n_clusters = 5, .n_days = 120, .dimension = 32});
    double within = 0.0, across = 0.0;
    std::size_t nw = 0, na = 0;
    for (Date t = corpus.start; t + 1 < corpus.start + 120; ++t) {
      within += mean_pairwise_cosine(corpus.calendar.on(t), corpus.calendar.on(t), true);
      ++nw;
      across += mean_pairwise_cosine(corpus.calendar.on(t), corpus.calendar.on(t + 1), false);
      ++na;
    }
    within /= static_cast<double>(nw);
    across /= static_cast<double>(na);
    INFO("within " << within << " across " << across);
    CHECK(within - across >= 0.1);
  }
  SECTION("rare theme days are exact") {
    auto corpus = synth_corpus({.seed = 9, .n_days = 365, .dimension = 8, .rare_theme_days = 10});
    CHECK(std::count(corpus.themes.begin(), corpus.themes.end(), 4u) == 10);
  }
}

TEST_CASE("synth_sales", "[event-data][synth]") {
  auto corpus = synth_corpus({.seed = 12, .n_days = 364, .dimension = 8, .rare_theme_days = 10});

  SECTION("no impacts and no noise: pure trend plus weekly seasonality decomposes cleanly") {
    SynthSalesConfig cfg{.seed = 1, .trend_slope = 0.5, .weekly_amp = 100.0, .yearly_amp = 0.0, .noise_sd = 0.0, .impact_map = {}};
    auto sales = synth_sales(cfg, corpus);
    CHECK(sales.impulse_days.empty());
    auto d = eval::stl_decompose(sales.series.values, 7);
    for (std::size_t i = 3; i + 3 < d.residual.size(); ++i) CHECK(std::abs(d.residual[i]) < 1e-6 * 100.0);
  }
  SECTION("a +1000 impulse with no decay adds exactly 1000 on its day") {
    SynthSalesConfig cfg{.seed = 1, .impact_map = {}};
    auto without = synth_sales(cfg, corpus);
    cfg.impact_map[4] = {1000.0, 0.0};
    auto with = synth_sales(cfg, corpus);
    REQUIRE(with.impulse_days.size() == 10);
    for (std::size_t i = 0; i < with.series.size(); ++i) {
      const Date day = with.series.date_at(i);
      const bool hit = std::find(with.impulse_days.begin(), with.impulse_days.end(), day) != with.impulse_days.end();
      if (hit) CHECK(with.series.values[i] == without.series.values[i] + 1000.0);
      else CHECK(with.series.values[i] == without.series.values[i]);
    }
  }
  SECTION("decayed impulses spread forward") {
    SynthSalesConfig cfg{.seed = 1, .noise_sd = 0.0, .impact_map = {}};
    cfg.impact_map[4] = {500.0, 2.0};
    auto sales = synth_sales(cfg, corpus);
    const auto i = sales.series.index_of(sales.impulse_days.front());
    CHECK(sales.impulses[i + 1] >= 500.0 * std::exp(-0.5));
    CHECK(sales.impulses[i + 1] < sales.impulses[i] + 1e-9 + 500.0);
  }
  SECTION("the ten largest residuals contain at least eight impulse days") {
    SynthSalesConfig cfg{.seed = 3, .noise_sd = 20.0, .impact_map = {}};
    cfg.impact_map[4] = {800.0, 0.0};
    auto sales = synth_sales(cfg, corpus);
    auto d = eval::stl_decompose(sales.series.values, 7);
    auto top = eval::top_k_anomalies(d.residual, sales.series.start, 10, sales.series.start, sales.series.end());
    std::size_t hits = 0;
    for (Date t : top) hits += std::count(sales.impulse_days.begin(), sales.impulse_days.end(), t);
    CHECK(hits >= 8);
  }
  SECTION("values are never negative and the generator is pure") {
    SynthSalesConfig cfg{.seed = 5, .base_level = 10.0, .noise_sd = 50.0, .impact_map = {}};
    auto a = synth_sales(cfg, corpus);
    auto b = synth_sales(cfg, corpus);
    CHECK(a.series.values == b.series.values);
    for (double v : a.series.values) CHECK(v >= 0.0);
  }
}

TEST_CASE("sales CSV parsing", "[event-data][sales]") {
  std::istringstream good("date,value\n2020-01-01,3\n2020-01-02,4.5\n");
  auto s = parse_sales(good, "cat");
  CHECK(s.size() == 2);
  CHECK(s.end() == Date::from_ymd(2020, 1, 2));

  std::istringstream gap("date,value\n2020-01-01,3\n2020-01-03,4.5\n");
  CHECK_THROWS_AS(parse_sales(gap), ParseError);
  std::istringstream negative("date,value\n2020-01-01,-3\n");
  CHECK_THROWS_AS(parse_sales(negative), ParseError);
  std::istringstream header("day,value\n");
  CHECK_THROWS_AS(parse_sales(header), ParseError);

  std::istringstream back(format_dated_csv(s.start, {0.1, 1.0 / 3.0}, "value"));
  auto r = parse_sales(back);
  CHECK(r.values[1] == 1.0 / 3.0);
}
