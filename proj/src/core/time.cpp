#include "stormcast/core/time.hpp"

#include <cstdio>
#include <string>

#include "stormcast/core/errors.hpp"

namespace stormcast {

TimePoint parse_iso8601(std::string_view text) {
  const std::string s(text);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int consumed = 0;
  const int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (n < 6 || (sep != 'T' && sep != ' ')) {
    throw DataError("invalid ISO-8601 timestamp '" + s + "'");
  }
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < s.size() && s[pos] == ':') {
    int extra = 0;
    if (std::sscanf(s.c_str() + pos, ":%2d%n", &sec, &extra) != 1) {
      throw DataError("invalid seconds in timestamp '" + s + "'");
    }
    pos += static_cast<std::size_t>(extra);
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) throw DataError("trailing characters in timestamp '" + s + "'");

  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) throw DataError("timestamp out of range '" + s + "'");
  return std::chrono::sys_days{ymd} + std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{sec};
}

std::string format_iso8601(TimePoint t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{day};
  const std::chrono::hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

}  // namespace stormcast
