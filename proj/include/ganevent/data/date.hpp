#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "ganevent/core/error.hpp"

namespace ganevent::data {

/// Calendar day, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  static Date from_ymd(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok()) throw ParseError("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) + "-" + std::to_string(day));
    return Date(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
  }

  /// Strict ISO-8601 `YYYY-MM-DD`.
  static Date parse(std::string_view s) {
    auto fail = [&] { return ParseError("expected date YYYY-MM-DD, got '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw fail();
    int y = 0;
    unsigned m = 0, d = 0;
    auto num = [&](std::string_view part, auto& out) {
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
      if (ec != std::errc{} || p != part.data() + part.size()) throw fail();
    };
    num(s.substr(0, 4), y);
    num(s.substr(5, 2), m);
    num(s.substr(8, 2), d);
    return from_ymd(y, m, d);
  }

  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}}; }

  int year() const { return static_cast<int>(ymd().year()); }
  unsigned month() const { return static_cast<unsigned>(ymd().month()); }
  unsigned day() const { return static_cast<unsigned>(ymd().day()); }

  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
  }

  constexpr std::int32_t days_since_epoch() const noexcept { return days_; }

  constexpr Date operator+(std::int32_t n) const noexcept { return Date(days_ + n); }
  constexpr Date operator-(std::int32_t n) const noexcept { return Date(days_ - n); }
  constexpr std::int32_t operator-(Date other) const noexcept { return days_ - other.days_; }
  constexpr Date& operator++() noexcept {
    ++days_;
    return *this;
  }
  constexpr auto operator<=>(const Date&) const = default;

 private:
  std::int32_t days_ = 0;
};

inline unsigned days_in_month(int year, unsigned month) {
  const auto last = std::chrono::year_month_day_last{std::chrono::year{year}, std::chrono::month_day_last{std::chrono::month{month}}};
  return static_cast<unsigned>(last.day());
}

}  // namespace ganevent::data
