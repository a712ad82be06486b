#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace oasis {

using Timestamp = std::chrono::sys_seconds;

/// Accepts `YYYY-MM-DDTHH:MM[:SS][Z]`, the same with a space separator
/// (the CO-OPS style "2016-06-16 03:42"), and a bare `YYYY-MM-DD`.
/// Only UTC is understood; explicit non-zero offsets are rejected.
std::optional<Timestamp> parse_iso8601(std::string_view text);

/// `YYYY-MM-DDTHH:MM:SSZ`
std::string format_iso8601(Timestamp t);

/// `YYYYMMDD`, as the CO-OPS API expects for begin/end dates.
std::string format_yyyymmdd(Timestamp t);

Timestamp floor_to_day(Timestamp t);
Timestamp floor_to_month(Timestamp t);

inline double hours_between(Timestamp from, Timestamp to) {
    return static_cast<double>((to - from).count()) / 3600.0;
}

inline std::int64_t to_epoch_seconds(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_epoch_seconds(std::int64_t s) { return Timestamp{std::chrono::seconds{s}}; }

}  // namespace oasis
