#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace stormcast {

using TimePoint = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS][Z]" as UTC.
/// Throws DataError on malformed input.
TimePoint parse_iso8601(std::string_view text);

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(TimePoint t);

}  // namespace stormcast
