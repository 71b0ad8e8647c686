#include "replayroi/time.hpp"

#include "replayroi/error.hpp"

#include <charconv>
#include <ctime>

#include <fmt/format.h>

namespace replayroi {

namespace chr = std::chrono;

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
    if (pos + len > text.size()) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed instant '{}'", whole));
    }
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
    if (ec != std::errc{} || ptr != text.data() + pos + len) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed instant '{}'", whole));
    }
    return value;
}

void expect_char(std::string_view text, std::size_t pos, char c, std::string_view whole) {
    if (pos >= text.size() || text[pos] != c) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed instant '{}'", whole));
    }
}

} // namespace

Instant instant_from_seconds(std::int64_t epoch_seconds) {
    return Instant{chr::duration_cast<Millis>(chr::seconds{epoch_seconds})};
}

std::int64_t to_epoch_seconds(Instant t) {
    return chr::floor<chr::seconds>(t).time_since_epoch().count();
}

std::string format_instant(Instant t) {
    const auto day = chr::floor<chr::days>(t);
    const chr::year_month_day ymd{day};
    const chr::hh_mm_ss hms{t - day};
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}.{:03d}Z",
                       static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()), hms.hours().count(),
                       hms.minutes().count(), hms.seconds().count(), hms.subseconds().count());
}

std::string format_date(Instant t) {
    const chr::year_month_day ymd{chr::floor<chr::days>(t)};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

bool is_date_only(std::string_view text) { return text.size() == 10; }

Instant parse_instant(std::string_view text) {
    const int y = read_int(text, 0, 4, text);
    expect_char(text, 4, '-', text);
    const int mo = read_int(text, 5, 2, text);
    expect_char(text, 7, '-', text);
    const int d = read_int(text, 8, 2, text);
    const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(mo)},
                                  chr::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("invalid date '{}'", text));
    }
    Instant result{chr::sys_days{ymd}};
    if (text.size() == 10) return result;

    if (text[10] != 'T' && text[10] != ' ') {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed instant '{}'", text));
    }
    const int hh = read_int(text, 11, 2, text);
    expect_char(text, 13, ':', text);
    const int mm = read_int(text, 14, 2, text);
    int ss = 0;
    int ms = 0;
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        ss = read_int(text, 17, 2, text);
        pos = 19;
        if (pos < text.size() && text[pos] == '.') {
            std::size_t end = pos + 1;
            while (end < text.size() && text[end] >= '0' && text[end] <= '9') ++end;
            const std::size_t digits = end - pos - 1;
            if (digits == 0) {
                throw Error(ErrorKind::InvalidArgument, fmt::format("malformed instant '{}'", text));
            }
            ms = read_int(text, pos + 1, std::min<std::size_t>(digits, 3), text);
            for (std::size_t k = digits; k < 3; ++k) ms *= 10;
            pos = end;
        }
    }
    if (pos < text.size() && text[pos] == 'Z') ++pos;
    if (pos != text.size() || hh > 23 || mm > 59 || ss > 60) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed instant '{}'", text));
    }
    return result + chr::hours{hh} + chr::minutes{mm} + chr::seconds{ss} + Millis{ms};
}

Millis parse_duration(std::string_view text) {
    if (text.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed duration '{}'", text));
    }
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size() - 1, value);
    if (ec != std::errc{} || ptr != text.data() + text.size() - 1 || value <= 0) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("malformed duration '{}'", text));
    }
    switch (text.back()) {
    case 's': return chr::seconds{value};
    case 'm': return chr::minutes{value};
    case 'h': return chr::hours{value};
    case 'd': return chr::days{value};
    case 'w': return chr::weeks{value};
    default:
        throw Error(ErrorKind::InvalidArgument, fmt::format("unknown duration unit in '{}'", text));
    }
}

std::int64_t monotonic_ns() {
    return chr::duration_cast<chr::nanoseconds>(chr::steady_clock::now().time_since_epoch())
        .count();
}

Instant SystemClock::wall() const {
    return chr::time_point_cast<Millis>(chr::system_clock::now());
}

} // namespace replayroi
