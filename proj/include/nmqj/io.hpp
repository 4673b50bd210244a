#pragma once

// File formats: time series as CSV (t, one column per observable, n_eff),
// events as JSON lines, summaries as a single JSON document, tabulated
// rates as two-column CSV. Doubles are written with shortest round-trip
// formatting, so re-reading a file reproduces the in-memory values exactly.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "jump_engine.hpp"
#include "rates.hpp"

namespace nmqj {

struct TimeSeriesRecord {
  double t = 0.0;
  std::vector<double> values;  // one per observable, order fixed by the header
  int n_eff = 0;

  friend bool operator==(const TimeSeriesRecord&, const TimeSeriesRecord&) = default;
};

inline std::string format_double(double v) {
  char buf[64];
  std::to_chars_result res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  std::from_chars_result res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw Error(context + ": bad number '" + std::string(s) + "'");
  return v;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);  // binary: no newline translation anywhere
  if (!f) throw Error("cannot open for writing: " + path.string());
  return f;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for reading: " + path.string());
  return f;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

inline void write_timeseries_csv(const std::filesystem::path& path,
                                 const std::vector<std::string>& observable_names,
                                 const std::vector<TimeSeriesRecord>& records) {
  std::ofstream f = detail::open_out(path);
  f << "t";
  for (const std::string& n : observable_names) f << ',' << n;
  f << ",n_eff\n";
  for (const TimeSeriesRecord& r : records) {
    if (r.values.size() != observable_names.size())
      throw std::invalid_argument("write_timeseries_csv: record width mismatch");
    f << format_double(r.t);
    for (double v : r.values) f << ',' << format_double(v);
    f << ',' << r.n_eff << '\n';
  }
}

inline std::pair<std::vector<std::string>, std::vector<TimeSeriesRecord>>
read_timeseries_csv(const std::filesystem::path& path) {
  std::ifstream f = detail::open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw Error("time series CSV is empty: " + path.string());
  std::vector<std::string_view> head = detail::split(line, ',');
  if (head.size() < 2 || head.front() != "t" || head.back() != "n_eff")
    throw Error("time series CSV header must be t,<observables...>,n_eff");
  std::vector<std::string> names(head.begin() + 1, head.end() - 1);

  std::vector<TimeSeriesRecord> records;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cols = detail::split(line, ',');
    if (cols.size() != head.size())
      throw Error("time series CSV line " + std::to_string(lineno) + ": wrong column count");
    TimeSeriesRecord r;
    std::string where = path.string() + ":" + std::to_string(lineno);
    r.t = parse_double(cols[0], where);
    for (std::size_t i = 1; i + 1 < cols.size(); ++i)
      r.values.push_back(parse_double(cols[i], where));
    r.n_eff = static_cast<int>(parse_double(cols.back(), where));
    records.push_back(std::move(r));
  }
  return {std::move(names), std::move(records)};
}

inline nlohmann::json event_to_json(const JumpEvent& ev) {
  return nlohmann::json{{"t", ev.t},
                        {"channel", ev.channel_label},
                        {"sign", std::string(to_string(ev.sign))},
                        {"source_id", ev.source_id},
                        {"target_id", ev.target_id},
                        {"members_moved", ev.members_moved}};
}

inline JumpEvent event_from_json(const nlohmann::json& j) {
  JumpEvent ev;
  ev.t = j.at("t").get<double>();
  ev.channel_label = j.at("channel").get<std::string>();
  std::string sign = j.at("sign").get<std::string>();
  if (sign == "positive") ev.sign = JumpSign::positive;
  else if (sign == "negative") ev.sign = JumpSign::negative;
  else throw Error("event log: unknown sign '" + sign + "'");
  ev.source_id = j.at("source_id").get<int>();
  ev.target_id = j.at("target_id").get<int>();
  ev.members_moved = j.at("members_moved").get<std::int64_t>();
  return ev;
}

inline void write_events_jsonl(const std::filesystem::path& path,
                               const std::vector<JumpEvent>& events) {
  std::ofstream f = detail::open_out(path);
  for (const JumpEvent& ev : events) f << event_to_json(ev).dump() << '\n';
}

inline std::vector<JumpEvent> read_events_jsonl(const std::filesystem::path& path) {
  std::ifstream f = detail::open_in(path);
  std::vector<JumpEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error("event log line " + std::to_string(lineno) + ": invalid JSON");
    out.push_back(event_from_json(j));
  }
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream f = detail::open_out(path);
  f << j.dump(2) << '\n';
}

// Two-column CSV (time, rate), optional header line, strictly ascending
// times. This is the on-disk form of RateFunction::tabulated.
inline RateFunction load_rate_table(const std::filesystem::path& path) {
  std::ifstream f = detail::open_in(path);
  std::vector<double> times, values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cols = detail::split(line, ',');
    if (cols.size() != 2)
      throw Error("rate table " + path.string() + ":" + std::to_string(lineno) +
                  ": expected two columns");
    if (lineno == 1) {
      // Allow a header row.
      double probe;
      std::from_chars_result res =
          std::from_chars(cols[0].data(), cols[0].data() + cols[0].size(), probe);
      if (res.ec != std::errc()) continue;
    }
    std::string where = path.string() + ":" + std::to_string(lineno);
    times.push_back(parse_double(cols[0], where));
    values.push_back(parse_double(cols[1], where));
  }
  try {
    return RateFunction::tabulated(std::move(times), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw Error("rate table " + path.string() + ": " + e.what());
  }
}

}  // namespace nmqj
