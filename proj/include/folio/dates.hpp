#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "folio/errors.hpp"

namespace folio {

/// Calendar date with civil-day arithmetic. Serial numbers count days since
/// 1970-01-01 so date differences and calendar lags are plain integer math.
struct Date {
    std::int16_t year = 1970;
    std::int8_t month = 1;
    std::int8_t day = 1;

    friend auto operator<=>(const Date&, const Date&) = default;
};

namespace detail {

constexpr bool is_leap(int y) {
    return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0);
}

constexpr int days_in_month(int y, int m) {
    constexpr int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : d[m - 1];
}

// Howard Hinnant's civil-from-days algorithms.
constexpr std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr Date civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<std::int16_t>(y + (m <= 2)),
                static_cast<std::int8_t>(m), static_cast<std::int8_t>(d)};
}

}  // namespace detail

inline std::int64_t to_serial(const Date& d) {
    return detail::days_from_civil(d.year, d.month, d.day);
}

inline Date from_serial(std::int64_t serial) { return detail::civil_from_days(serial); }

inline Date add_days(const Date& d, int n) { return from_serial(to_serial(d) + n); }

/// Monday=0 .. Sunday=6.
inline int weekday(const Date& d) {
    const std::int64_t s = to_serial(d);  // 1970-01-01 was a Thursday
    return static_cast<int>(((s % 7) + 7 + 3) % 7);
}

/// Calendar quarter, totally ordered.
struct Quarter {
    int year = 1970;
    int q = 1;  // 1..4

    friend auto operator<=>(const Quarter&, const Quarter&) = default;

    Quarter next() const { return q == 4 ? Quarter{year + 1, 1} : Quarter{year, q + 1}; }
    Date start() const {
        return Date{static_cast<std::int16_t>(year),
                    static_cast<std::int8_t>(3 * (q - 1) + 1), 1};
    }
    std::string label() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04dQ%d", year, q);
        return buf;
    }
};

inline Quarter quarter_of(const Date& d) { return Quarter{d.year, (d.month - 1) / 3 + 1}; }

/// ISO-8601 week identifier (week-year may differ from calendar year at
/// the boundaries).
struct IsoWeek {
    int year = 1970;
    int week = 1;

    friend auto operator<=>(const IsoWeek&, const IsoWeek&) = default;
};

inline IsoWeek iso_week_of(const Date& d) {
    // Thursday of the week the date falls in determines the ISO week-year.
    const std::int64_t thursday = to_serial(d) - weekday(d) + 3;
    const Date th = from_serial(thursday);
    const std::int64_t jan1 = detail::days_from_civil(th.year, 1, 1);
    return IsoWeek{th.year, static_cast<int>((thursday - jan1) / 7) + 1};
}

inline std::string to_string(const Date& d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", int(d.year), int(d.month), int(d.day));
    return buf;
}

/// Parses strict ISO-8601 YYYY-MM-DD.
inline Date parse_date(std::string_view s) {
    auto fail = [&] { throw DataError("invalid ISO-8601 date: '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
    int y = 0, m = 0, d = 0;
    auto num = [&](std::string_view part, int& out) {
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        if (ec != std::errc{} || p != part.data() + part.size()) fail();
    };
    num(s.substr(0, 4), y);
    num(s.substr(5, 2), m);
    num(s.substr(8, 2), d);
    if (m < 1 || m > 12 || d < 1 || d > detail::days_in_month(y, m)) fail();
    return Date{static_cast<std::int16_t>(y), static_cast<std::int8_t>(m),
                static_cast<std::int8_t>(d)};
}

}  // namespace folio
