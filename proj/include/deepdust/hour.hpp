#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "deepdust/error.hpp"

namespace deepdust {

// An hour boundary in UTC, counted from 1970-01-01T00:00Z.
struct Hour {
  std::int64_t index = 0;

  friend constexpr auto operator<=>(const Hour&, const Hour&) = default;
  friend constexpr Hour operator+(Hour h, std::int64_t n) { return {h.index + n}; }
  friend constexpr Hour operator-(Hour h, std::int64_t n) { return {h.index - n}; }
  friend constexpr std::int64_t operator-(Hour a, Hour b) { return a.index - b.index; }

  constexpr int hour_of_day() const {
    auto r = index % 24;
    return static_cast<int>(r < 0 ? r + 24 : r);
  }
};

namespace detail {

inline bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  auto first = s.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, out);
  return ec == std::errc{} && ptr == first + len;
}

}  // namespace detail

inline Hour hour_from_civil(int year, unsigned month, unsigned day, int hour) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok() || hour < 0 || hour > 23) {
    throw data_error("invalid calendar date/hour");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return {static_cast<std::int64_t>(days) * 24 + hour};
}

// Accepts "YYYY-MM-DDTHH:MM[:SS][Z]" (a space may replace the 'T'). Minutes and
// seconds must be zero. `utc_offset_hours` is the offset of the source clock
// from UTC; it is subtracted so the result is always UTC.
inline Hour parse_hour(std::string_view text, int utc_offset_hours = 0) {
  auto fail = [&]() -> Hour { throw data_error("malformed timestamp '" + std::string(text) + "'"); };
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() != 16 && text.size() != 19) return fail();
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
    return fail();
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!detail::read_int(text, 0, 4, y) || !detail::read_int(text, 5, 2, mo) ||
      !detail::read_int(text, 8, 2, d) || !detail::read_int(text, 11, 2, h) ||
      !detail::read_int(text, 14, 2, mi)) {
    return fail();
  }
  if (text.size() == 19 && (text[16] != ':' || !detail::read_int(text, 17, 2, sec))) return fail();
  if (mi != 0 || sec != 0) {
    throw data_error("timestamp '" + std::string(text) + "' is not on an hour boundary");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return fail();
  try {
    return hour_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h) - utc_offset_hours;
  } catch (const Error&) {
    return fail();
  }
}

// "YYYY-MM-DD" -> first hour of that UTC day.
inline Hour parse_day(std::string_view text) {
  int y = 0, mo = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !detail::read_int(text, 0, 4, y) ||
      !detail::read_int(text, 5, 2, mo) || !detail::read_int(text, 8, 2, d) || mo < 1 || mo > 12 ||
      d < 1 || d > 31) {
    throw argument_error("malformed date '" + std::string(text) + "', expected YYYY-MM-DD");
  }
  return hour_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), 0);
}

inline std::string format_hour(Hour h) {
  using namespace std::chrono;
  auto days = h.index >= 0 ? h.index / 24 : -((-h.index + 23) / 24);
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), h.hour_of_day());
  return buf;
}

}  // namespace deepdust
