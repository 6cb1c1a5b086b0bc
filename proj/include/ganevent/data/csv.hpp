#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ganevent/core/error.hpp"

namespace ganevent::data {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, p);
}

inline double parse_double(std::string_view s, std::size_t line = 0) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ParseError("expected a number, got '" + std::string(s) + "'", line);
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

/// Reads a CSV file, checks the header starts with `expected_header` columns,
/// and returns the remaining rows with their 1-based line numbers.
struct CsvRows {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

inline CsvRows read_csv(std::istream& in, const std::vector<std::string>& expected_header) {
  CsvRows out;
  std::string line;
  std::size_t number = 0;
  if (!std::getline(in, line)) throw ParseError("empty CSV, expected header", 1);
  ++number;
  for (auto f : split_csv(line)) out.header.emplace_back(f);
  if (out.header.size() < expected_header.size() ||
      !std::equal(expected_header.begin(), expected_header.end(), out.header.begin()))
    throw ParseError("unexpected CSV header '" + line + "'", 1);
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    for (auto f : split_csv(line)) fields.emplace_back(f);
    if (fields.size() != out.header.size())
      throw ParseError("expected " + std::to_string(out.header.size()) + " fields", number);
    out.rows.emplace_back(number, std::move(fields));
  }
  return out;
}

inline CsvRows read_csv_file(const std::string& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return read_csv(in, expected_header);
}

}  // namespace ganevent::data
