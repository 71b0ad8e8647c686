#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace replayroi {

using Millis = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<Millis>;

Instant instant_from_seconds(std::int64_t epoch_seconds);
std::int64_t to_epoch_seconds(Instant t);

// ISO-8601 UTC, millisecond precision, e.g. 2021-03-04T05:06:07.089Z.
std::string format_instant(Instant t);
// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM[:SS[.fff]][Z]. Throws Error(InvalidArgument).
Instant parse_instant(std::string_view text);
// True when the text carries only a calendar date.
bool is_date_only(std::string_view text);

std::string format_date(Instant t);

// Durations like 7d, 12h, 30m, 45s, 2w. Throws Error(InvalidArgument).
Millis parse_duration(std::string_view text);

// Monotonic nanoseconds; comparable across processes on the same boot.
std::int64_t monotonic_ns();

class Clock {
public:
    virtual ~Clock() = default;
    virtual Instant wall() const = 0;
    virtual std::int64_t monotonic() const = 0;
};

class SystemClock final : public Clock {
public:
    Instant wall() const override;
    std::int64_t monotonic() const override { return monotonic_ns(); }
};

} // namespace replayroi
