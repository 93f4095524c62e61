#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "wqdiff/error.hpp"

namespace wqdiff {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

/// `v` with 15 significant digits; used for human-facing tables.
inline std::string format_sig15(double v) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 15);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InputError("short write to " + path);
}

/// Calls `fn(row_number, line)` for every non-blank line that is not a `#`
/// comment. Row numbers are 1-based physical line numbers.
inline void for_each_data_line(std::string_view text,
                               const std::function<void(std::size_t, std::string_view)>& fn) {
  std::size_t row = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++row;
    const auto line = trim(text.substr(start, end - start));
    if (!line.empty() && line.front() != '#') fn(row, line);
    start = end + 1;
  }
}

/// Splits CSV text into a header and data rows, checking the header names.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
};

inline CsvTable parse_csv(std::string_view text, const std::vector<std::string>& expected_header) {
  CsvTable table;
  bool have_header = false;
  for_each_data_line(text, [&](std::size_t row, std::string_view line) {
    auto fields = split(line, ',');
    if (!have_header) {
      for (auto f : fields) table.header.emplace_back(f);
      if (table.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw SchemaError(row, "expected header '" + want + "'");
      }
      have_header = true;
      return;
    }
    if (fields.size() != expected_header.size())
      throw SchemaError(row, "expected " + std::to_string(expected_header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
    table.rows.emplace_back(row, std::move(fields));
  });
  if (!have_header) throw SchemaError(1, "missing header");
  return table;
}

}  // namespace wqdiff
