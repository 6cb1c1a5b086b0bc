#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganevent/core/checkpoint.hpp"
#include "ganevent/core/error.hpp"
#include "ganevent/data/date.hpp"

namespace ganevent::data {

/// A world event with its pretrained embedding.
struct Event {
  std::string id;
  std::string title;
  Date date;
  std::string category;
  std::int64_t link_count = 0;
  std::vector<double> embedding;

  friend bool operator==(const Event&, const Event&) = default;
};

inline const Date kCorpusFirstDay = Date::from_ymd(1980, 1, 1);
inline const Date kCorpusLastDay = Date::from_ymd(2020, 12, 31);

/// Events indexed by date. Immutable once built; reads are thread-safe.
class EventCalendar {
 public:
  explicit EventCalendar(std::size_t dimension = 0) : dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  /// Adds an event; the first event fixes the dimension when none was declared.
  void add(Event e) {
    if (dimension_ == 0) dimension_ = e.embedding.size();
    if (e.embedding.size() != dimension_)
      throw ContractError("event " + e.id + " has embedding dimension " + std::to_string(e.embedding.size()) +
                          ", calendar expects " + std::to_string(dimension_));
    if (!std::all_of(e.embedding.begin(), e.embedding.end(), [](double v) { return std::isfinite(v); }))
      throw ContractError("event " + e.id + " has a non-finite embedding");
    by_date_[e.date].push_back(std::move(e));
    ++count_;
  }

  /// Events dated exactly `t`, in insertion order.
  const std::vector<Event>& on(Date t) const {
    static const std::vector<Event> none;
    auto it = by_date_.find(t);
    return it == by_date_.end() ? none : it->second;
  }

  std::optional<Date> first_day() const {
    if (by_date_.empty()) return std::nullopt;
    return by_date_.begin()->first;
  }
  std::optional<Date> last_day() const {
    if (by_date_.empty()) return std::nullopt;
    return by_date_.rbegin()->first;
  }

  /// Visits every stored event once, in date order.
  template <class F>
  void for_each(F&& f) const {
    for (const auto& [date, events] : by_date_)
      for (const Event& e : events) f(e);
  }

 private:
  std::size_t dimension_;
  std::size_t count_ = 0;
  std::map<Date, std::vector<Event>> by_date_;
};

/// Union of the events dated within `lag` days before `t` and on `t`,
/// deduplicated by id (the copy closest to `t` wins) and sorted by id.
inline std::vector<Event> day_event_set(const EventCalendar& calendar, Date t, int lag = 1) {
  std::map<std::string, const Event*> by_id;
  for (int back = lag; back >= 0; --back)
    for (const Event& e : calendar.on(t - back)) by_id[e.id] = &e;
  std::vector<Event> out;
  out.reserve(by_id.size());
  for (const auto& [id, e] : by_id) out.push_back(*e);
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines corpus files

struct Rejection {
  std::size_t line;
  std::string reason;
};

struct LoadedEvents {
  EventCalendar calendar;
  std::vector<Rejection> rejections;
};

struct LoadOptions {
  std::size_t dimension = 0;  // 0: taken from the first accepted event
  Date first_day = kCorpusFirstDay;
  Date last_day = kCorpusLastDay;
};

inline Event event_from_json(const nlohmann::json& j) {
  Event e;
  e.id = j.at("id").get<std::string>();
  e.title = j.at("title").get<std::string>();
  e.date = Date::parse(j.at("date").get<std::string>());
  e.category = j.at("category").get<std::string>();
  e.link_count = j.at("link_count").get<std::int64_t>();
  e.embedding = j.at("embedding").get<std::vector<double>>();
  return e;
}

inline nlohmann::json event_to_json(const Event& e) {
  return {{"id", e.id},
          {"title", e.title},
          {"date", e.date.iso()},
          {"category", e.category},
          {"link_count", e.link_count},
          {"embedding", e.embedding}};
}

/// Parses a JSON-lines corpus. Lines that parse but fall outside the date
/// window or carry the wrong dimension are rejected and reported; a line that
/// does not parse aborts the load with a ParseError naming it.
inline LoadedEvents parse_events(std::istream& in, const LoadOptions& options = {}) {
  LoadedEvents out{EventCalendar(options.dimension), {}};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Event e;
    try {
      e = event_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("malformed event: ") + ex.what(), number);
    } catch (const ParseError& ex) {
      throw ParseError(ex.what(), number);
    }
    if (e.date < options.first_day || e.date > options.last_day) {
      out.rejections.push_back({number, "date " + e.date.iso() + " outside " + options.first_day.iso() + ".." +
                                            options.last_day.iso()});
      continue;
    }
    if (e.link_count < 0) {
      out.rejections.push_back({number, "negative link_count"});
      continue;
    }
    const std::size_t dim = out.calendar.dimension();
    if (dim != 0 && e.embedding.size() != dim) {
      out.rejections.push_back({number, "embedding dimension " + std::to_string(e.embedding.size()) +
                                            " != " + std::to_string(dim)});
      continue;
    }
    if (e.embedding.empty() ||
        !std::all_of(e.embedding.begin(), e.embedding.end(), [](double v) { return std::isfinite(v); })) {
      out.rejections.push_back({number, "empty or non-finite embedding"});
      continue;
    }
    out.calendar.add(std::move(e));
  }
  return out;
}

inline LoadedEvents load_events(const std::filesystem::path& path, const LoadOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read event file " + path.string());
  return parse_events(in, options);
}

inline std::string format_events(const EventCalendar& calendar) {
  std::string out;
  calendar.for_each([&](const Event& e) {
    out += event_to_json(e).dump();
    out += '\n';
  });
  return out;
}

inline void save_events(const std::filesystem::path& path, const EventCalendar& calendar) {
  nn::write_file_atomic(path, format_events(calendar));
}

}  // namespace ganevent::data
