#pragma once

// RFC-4180 CSV: mandatory header row, '.' decimal point, optional quoting.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cause_sieve/model.hpp"

namespace cause_sieve::csv {

namespace detail {

inline std::vector<std::vector<std::string>> split_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  const auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) fail(Errc::MalformedCsv, "quote inside unquoted field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
    ++i;
  }
  if (quoted) fail(Errc::MalformedCsv, "unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  return records;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

/// Empty cells and NaN/Inf spellings parse to a non-finite value, which
/// dataset validation then reports with its coordinates.
inline double parse_number(const std::string& raw, std::size_t row, std::size_t col) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec == std::errc::result_out_of_range) return std::numeric_limits<double>::infinity();
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(Errc::MalformedCsv, "row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                                 ": '" + s + "' is not a number");
  return v;
}

}  // namespace detail

inline RawTable parse(const std::string& text) {
  auto records = detail::split_records(text);
  require(!records.empty(), Errc::MalformedCsv, "empty input, header row required");
  RawTable t;
  for (auto& h : records.front()) t.header.push_back(detail::trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    std::vector<double> row;
    row.reserve(records[r].size());
    for (std::size_t c = 0; c < records[r].size(); ++c) row.push_back(detail::parse_number(records[r][c], r, c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline RawTable read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Round-trip exact formatting (17 significant digits).
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes the dataset with its target as the first column.
inline std::string to_string(const Dataset& d) {
  std::string out;
  const auto& names = d.names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c) out += ',';
    out += quote_if_needed(names[c]);
  }
  out += '\n';
  const auto& v = d.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (c) out += ',';
      out += format_real(v(r, c));
    }
    out += '\n';
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::Io, "cannot write '" + path + "'");
  out << contents;
  require(static_cast<bool>(out), Errc::Io, "write to '" + path + "' failed");
}

}  // namespace cause_sieve::csv
