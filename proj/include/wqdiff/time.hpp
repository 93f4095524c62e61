#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace wqdiff {

/// UTC instant with one-second resolution, counted from the Unix epoch.
struct UtcTime {
  std::int64_t seconds = 0;

  friend constexpr auto operator<=>(UtcTime, UtcTime) = default;
  friend constexpr bool operator==(UtcTime, UtcTime) = default;

  constexpr UtcTime operator+(std::int64_t s) const { return {seconds + s}; }
  constexpr UtcTime operator-(std::int64_t s) const { return {seconds - s}; }
  friend constexpr std::int64_t operator-(UtcTime a, UtcTime b) { return a.seconds - b.seconds; }

  double hours() const { return static_cast<double>(seconds) / 3600.0; }
};

constexpr std::int64_t kMinute = 60;
constexpr std::int64_t kHour = 3600;
constexpr std::int64_t kDay = 86400;

constexpr std::int64_t abs_diff(UtcTime a, UtcTime b) {
  return a.seconds > b.seconds ? a.seconds - b.seconds : b.seconds - a.seconds;
}

namespace detail {

// Howard Hinnant's civil calendar algorithms.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

constexpr UtcTime make_utc(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                           int second = 0) {
  return {detail::days_from_civil(year, month, day) * kDay + hour * kHour + minute * kMinute +
          second};
}

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff](Z|+00:00)`. A space may replace `T`.
/// Fractional seconds are truncated. Only UTC offsets are accepted.
inline std::optional<UtcTime> parse_iso8601(std::string_view s) {
  int y, mo, d, h, mi, se;
  if (s.size() < 19) return std::nullopt;
  if (!detail::read_digits(s, 0, 4, y) || s[4] != '-' || !detail::read_digits(s, 5, 2, mo) ||
      s[7] != '-' || !detail::read_digits(s, 8, 2, d) || (s[10] != 'T' && s[10] != ' ') ||
      !detail::read_digits(s, 11, 2, h) || s[13] != ':' || !detail::read_digits(s, 14, 2, mi) ||
      s[16] != ':' || !detail::read_digits(s, 17, 2, se))
    return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60) return std::nullopt;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  const std::string_view zone = s.substr(pos);
  if (!(zone == "Z" || zone == "+00:00" || zone == "")) return std::nullopt;
  return make_utc(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, se);
}

inline std::string format_iso8601(UtcTime t) {
  std::int64_t days = t.seconds / kDay;
  std::int64_t rem = t.seconds % kDay;
  if (rem < 0) {
    rem += kDay;
    --days;
  }
  const auto c = detail::civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02dZ", static_cast<long long>(c.year),
                c.month, c.day, static_cast<int>(rem / kHour), static_cast<int>(rem % kHour / kMinute),
                static_cast<int>(rem % kMinute));
  return buf;
}

}  // namespace wqdiff
