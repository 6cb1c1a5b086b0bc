#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ganevent/core/checkpoint.hpp"
#include "ganevent/core/error.hpp"
#include "ganevent/data/csv.hpp"
#include "ganevent/data/date.hpp"

namespace ganevent::data {

/// Daily demand of one category: values[i] is the demand on start + i.
struct SalesSeries {
  std::string category;
  Date start;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  Date end() const { return start + static_cast<std::int32_t>(values.size()) - 1; }
  Date date_at(std::size_t i) const { return start + static_cast<std::int32_t>(i); }

  bool contains(Date d) const { return !values.empty() && d >= start && d <= end(); }

  std::size_t index_of(Date d) const {
    if (!contains(d)) throw ContractError("date " + d.iso() + " outside series " + category);
    return static_cast<std::size_t>(d - start);
  }

  double at(Date d) const { return values[index_of(d)]; }

  /// Days [from, to] inclusive.
  SalesSeries slice(Date from, Date to) const {
    const std::size_t a = index_of(from), b = index_of(to);
    require(a <= b, "empty slice");
    return {category, from, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(a),
                                               values.begin() + static_cast<std::ptrdiff_t>(b) + 1)};
  }
};

/// A dated series of one numeric column (`date,<name>`), used for the sales,
/// impulse, and prediction files.
inline std::string format_dated_csv(Date start, const std::vector<double>& values, const std::string& column) {
  std::string out = "date," + column + "\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    out += (start + static_cast<std::int32_t>(i)).iso() + "," + format_double(values[i]) + "\n";
  return out;
}

/// Parses `date,<column>` rows that must cover consecutive days.
inline SalesSeries parse_dated_csv(std::istream& in, const std::string& column, const std::string& category) {
  const auto csv = read_csv(in, {"date", column});
  SalesSeries s{category, Date{}, {}};
  for (const auto& [line, fields] : csv.rows) {
    Date d;
    try {
      d = Date::parse(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line);
    }
    const double v = parse_double(fields[1], line);
    if (s.values.empty()) {
      s.start = d;
    } else if (d != s.end() + 1) {
      throw ParseError("dates must be consecutive days; expected " + (s.end() + 1).iso() + ", got " + d.iso(), line);
    }
    s.values.push_back(v);
  }
  return s;
}

inline SalesSeries parse_sales(std::istream& in, const std::string& category = "synthetic") {
  auto s = parse_dated_csv(in, "value", category);
  for (std::size_t i = 0; i < s.values.size(); ++i)
    if (!(s.values[i] >= 0.0)) throw ParseError("sales must be non-negative on " + s.date_at(i).iso(), i + 2);
  return s;
}

inline SalesSeries load_sales(const std::filesystem::path& path, const std::string& category = "") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read sales file " + path.string());
  return parse_sales(in, category.empty() ? path.stem().string() : category);
}

inline void save_sales(const std::filesystem::path& path, const SalesSeries& s) {
  nn::write_file_atomic(path, format_dated_csv(s.start, s.values, "value"));
}

}  // namespace ganevent::data
