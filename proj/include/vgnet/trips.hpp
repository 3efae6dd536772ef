#pragma once

// Trip-record parsing from delimiter-separated text with a header row.
// Column mapping comes from a schema so different source layouts parse
// without code changes; each entry is either a header name or a 0-based
// column index written as digits.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgnet/common.hpp"

namespace vgnet {

struct TripRecord {
  std::int64_t pickup_time = 0;  // UTC epoch seconds
  double pickup_lat = 0.0;
  double pickup_lon = 0.0;
  bool has_dropoff = false;
  double dropoff_lat = 0.0;
  double dropoff_lon = 0.0;
};

struct TripSchema {
  std::string time;  // column name or 0-based index
  std::string lat;
  std::string lon;
  std::string dropoff_lat;  // empty when the dataset has no drop-off info
  std::string dropoff_lon;
  char delimiter = ',';

  bool wants_dropoff() const { return !dropoff_lat.empty() && !dropoff_lon.empty(); }
};

struct ParseResult {
  std::vector<TripRecord> records;
  std::size_t total_rows = 0;  // data rows seen (header excluded)
  std::size_t malformed = 0;
};

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<std::int64_t>(doe) - 719468;
}

// Accepts "YYYY-MM-DD HH:MM:SS" (or 'T' separator), "M/D/YYYY H:MM[:SS]",
// and plain integer epoch seconds. Timestamps are taken as given (UTC).
inline std::optional<std::int64_t> parse_timestamp(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;

  bool digits = true;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == 0 && (s[i] == '-' || s[i] == '+')) continue;
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      digits = false;
      break;
    }
  }
  if (digits) {
    try {
      return std::stoll(s);
    } catch (...) {
      return std::nullopt;
    }
  }

  int y, mo, d, h, mi, sec = 0;
  auto finish = [&](int yy, int mm, int dd, int hh, int mn, int ss) -> std::optional<std::int64_t> {
    if (mm < 1 || mm > 12 || dd < 1 || dd > 31 || hh < 0 || hh > 23 || mn < 0 || mn > 59 ||
        ss < 0 || ss > 60)
      return std::nullopt;
    return days_from_civil(yy, static_cast<unsigned>(mm), static_cast<unsigned>(dd)) * 86400LL +
           hh * 3600LL + mn * 60LL + ss;
  };
  if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &sec) == 6 ||
      std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &sec) == 6)
    return finish(y, mo, d, h, mi, sec);
  if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d", &y, &mo, &d, &h, &mi) == 5)
    return finish(y, mo, d, h, mi, 0);
  sec = 0;
  if (std::sscanf(s.c_str(), "%d/%d/%d %d:%d:%d", &mo, &d, &y, &h, &mi, &sec) >= 5)
    return finish(y, mo, d, h, mi, sec);
  return std::nullopt;
}

// Splits one delimited row; honors double quotes with "" escapes.
inline std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

namespace detail {

inline std::size_t resolve_column(const std::string& ref, const std::vector<std::string>& header) {
  bool digits = !ref.empty();
  for (char c : ref)
    if (!std::isdigit(static_cast<unsigned char>(c))) digits = false;
  if (digits) return static_cast<std::size_t>(std::stoull(ref));
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == ref) return i;
  throw std::runtime_error("trip schema: column '" + ref + "' not found in header");
}

inline std::optional<double> parse_coord(const std::string& s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline ParseResult parse_trips(const std::string& path, const TripSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trip file: " + path);

  ParseResult res;
  std::string line;
  bool have_header = false;
  std::size_t ct = 0, cla = 0, clo = 0, cdla = 0, cdlo = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_row(line, schema.delimiter);
    if (!have_header) {
      ct = detail::resolve_column(schema.time, fields);
      cla = detail::resolve_column(schema.lat, fields);
      clo = detail::resolve_column(schema.lon, fields);
      if (schema.wants_dropoff()) {
        cdla = detail::resolve_column(schema.dropoff_lat, fields);
        cdlo = detail::resolve_column(schema.dropoff_lon, fields);
      }
      have_header = true;
      continue;
    }
    ++res.total_rows;
    std::size_t need = std::max({ct, cla, clo});
    if (schema.wants_dropoff()) need = std::max({need, cdla, cdlo});
    if (need >= fields.size()) {
      ++res.malformed;
      continue;
    }
    auto t = parse_timestamp(fields[ct]);
    auto la = detail::parse_coord(fields[cla]);
    auto lo = detail::parse_coord(fields[clo]);
    if (!t || !la || !lo) {
      ++res.malformed;
      continue;
    }
    TripRecord rec;
    rec.pickup_time = *t;
    rec.pickup_lat = *la;
    rec.pickup_lon = *lo;
    if (schema.wants_dropoff()) {
      auto dla = detail::parse_coord(fields[cdla]);
      auto dlo = detail::parse_coord(fields[cdlo]);
      if (!dla || !dlo) {
        ++res.malformed;
        continue;
      }
      rec.has_dropoff = true;
      rec.dropoff_lat = *dla;
      rec.dropoff_lon = *dlo;
    }
    res.records.push_back(rec);
  }
  if (!have_header) {
    std::cerr << "warning: " << path << " is empty\n";
    return res;
  }
  if (res.total_rows > 0 && res.malformed * 2 > res.total_rows)
    throw std::runtime_error("trip file " + path + ": " + std::to_string(res.malformed) + " of " +
                             std::to_string(res.total_rows) + " rows malformed");
  if (res.records.empty())
    std::cerr << "warning: " << path << " yielded no valid trip records\n";
  return res;
}

}  // namespace vgnet
