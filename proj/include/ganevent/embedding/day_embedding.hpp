#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ganevent/data/csv.hpp"
#include "ganevent/data/events.hpp"
#include "ganevent/gan/model.hpp"
#include "ganevent/gan/train.hpp"

namespace ganevent::embedding {

struct DayEmbedding {
  data::Date date;
  std::vector<double> vector;
  std::size_t n_events = 0;

  friend bool operator==(const DayEmbedding&, const DayEmbedding&) = default;
};

/// Mean of leave-one-out reconstructions: each event is masked alone and the
/// generator's output at its position is collected. An empty day maps to the
/// zero vector.
inline std::vector<double> day_vector(const gan::Generator& g, const nn::Tensor& events) {
  const std::size_t d = g.dim();
  std::vector<double> out(d, 0.0);
  const std::size_t n = events.rows();
  if (n == 0) return out;
  for (std::size_t e = 0; e < n; ++e) {
    nn::Tape tape;
    const nn::Var rec = g.reconstruct(tape, events, {e});
    const auto row = rec.value().row_span(e);
    for (std::size_t j = 0; j < d; ++j) out[j] += row[j];
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

inline DayEmbedding day_embedding(const gan::Generator& g, data::Date date, const std::vector<data::Event>& events) {
  if (events.empty()) return {date, std::vector<double>(g.dim(), 0.0), 0};
  return {date, day_vector(g, gan::event_matrix(events, g.dim())), events.size()};
}

/// One embedding per day of [start, end], each over day_event_set(t, lag).
inline std::vector<DayEmbedding> embed_range(const gan::Generator& g, const data::EventCalendar& calendar,
                                             data::Date start, data::Date end, int lag = 1) {
  require(start <= end, "embed_range needs start <= end");
  require(calendar.empty() || calendar.dimension() == g.dim(), "calendar and generator dimensions differ");
  std::vector<DayEmbedding> out;
  out.reserve(static_cast<std::size_t>(end - start) + 1);
  for (data::Date t = start; t <= end; ++t) out.push_back(day_embedding(g, t, data::day_event_set(calendar, t, lag)));
  return out;
}

// ---------------------------------------------------------------------------
// CSV cache: date,n_events,v0,...,v{d-1}. Doubles are written in shortest
// round-trip form, so a reload is bit-exact.

inline std::string format_embeddings(const std::vector<DayEmbedding>& days) {
  std::ostringstream out;
  const std::size_t d = days.empty() ? 0 : days.front().vector.size();
  out << "date,n_events";
  for (std::size_t j = 0; j < d; ++j) out << ",v" << j;
  out << '\n';
  for (const auto& day : days) {
    require(day.vector.size() == d, "embeddings of mixed dimension");
    out << day.date.iso() << ',' << day.n_events;
    for (double v : day.vector) out << ',' << data::format_double(v);
    out << '\n';
  }
  return out.str();
}

inline std::vector<DayEmbedding> parse_embeddings(std::istream& in) {
  const auto csv = data::read_csv(in, {"date", "n_events"});
  const std::size_t d = csv.header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (csv.header[j + 2] != "v" + std::to_string(j)) throw ParseError("unexpected embedding column " + csv.header[j + 2], 1);
  std::vector<DayEmbedding> out;
  for (const auto& [line, fields] : csv.rows) {
    DayEmbedding day;
    try {
      day.date = data::Date::parse(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line);
    }
    day.n_events = static_cast<std::size_t>(data::parse_double(fields[1], line));
    day.vector.resize(d);
    for (std::size_t j = 0; j < d; ++j) day.vector[j] = data::parse_double(fields[j + 2], line);
    if (!out.empty() && day.date != out.back().date + 1) throw ParseError("embedding dates must be consecutive", line);
    out.push_back(std::move(day));
  }
  return out;
}

inline void save_embeddings(const std::filesystem::path& path, const std::vector<DayEmbedding>& days) {
  nn::write_file_atomic(path, format_embeddings(days));
}

inline std::vector<DayEmbedding> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embedding cache " + path.string() + " (produced by embed-days)");
  return parse_embeddings(in);
}

}  // namespace ganevent::embedding
