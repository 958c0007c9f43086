#pragma once

// `delta,y` dataset files.

#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "curestat/error.hpp"
#include "curestat/model.hpp"

namespace curestat {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// 17 significant digits; parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

inline CurrentStatusSample parse_csv(std::istream& in, const std::string& source = "<stream>") {
  auto fail = [&](std::size_t line, const std::string& msg) -> DataError {
    return DataError(source + ":" + std::to_string(line) + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header `delta,y`");
  std::string_view header = detail::trim(line);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  if (header != "delta,y") throw fail(1, "expected header `delta,y`");

  CurrentStatusSample sample;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view row = detail::trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string_view::npos) throw fail(lineno, "expected two fields `delta,y`");
    const auto d = detail::trim(row.substr(0, comma));
    const auto ys = detail::trim(row.substr(comma + 1));
    int delta = -1;
    if (d == "0") delta = 0;
    else if (d == "1") delta = 1;
    else throw fail(lineno, "delta must be 0 or 1");
    double y = 0.0;
    if (!detail::parse_double(ys, y) || !std::isfinite(y)) throw fail(lineno, "unparseable y");
    if (y < 0.0) throw fail(lineno, "negative y");
    sample.records.push_back({delta, y});
  }
  if (sample.records.empty()) throw DataError(source + ": empty sample");
  return sample;
}

inline CurrentStatusSample read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_csv(in, path);
}

inline void write_csv(const CurrentStatusSample& sample, std::ostream& out) {
  out << "delta,y\n";
  for (const auto& r : sample.records) out << r.delta << ',' << detail::format_double(r.y) << '\n';
}

inline void write_csv(const CurrentStatusSample& sample, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_csv(sample, out);
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace curestat
