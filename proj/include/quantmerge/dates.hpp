#ifndef QUANTMERGE_DATES_HPP
#define QUANTMERGE_DATES_HPP

#include <compare>
#include <cstdio>
#include <string>

#include "quantmerge/errors.hpp"

namespace quantmerge {

/// Calendar day, ISO-8601 in all interchange formats.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const Date&) const = default;

    static bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

    static int days_in_month(int y, int m) {
        static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        if (m == 2 && is_leap(y)) return 29;
        return d[m - 1];
    }

    bool valid() const {
        return month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
    }

    static Date parse(const std::string& s, const std::string& context) {
        Date d;
        char tail;
        if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &d.year, &d.month, &d.day, &tail) != 3 ||
            s.size() != 10 || s[4] != '-' || s[7] != '-' || !d.valid())
            throw DataError(context + ": cannot parse '" + s + "' as an ISO-8601 date");
        return d;
    }

    std::string to_string() const {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
        return buf;
    }

    Date next() const {
        Date d = *this;
        if (++d.day > days_in_month(d.year, d.month)) {
            d.day = 1;
            if (++d.month > 12) {
                d.month = 1;
                ++d.year;
            }
        }
        return d;
    }

    /// this + n days, n >= 0.
    Date plus_days(int n) const {
        Date d = *this;
        for (int i = 0; i < n; ++i) d = d.next();
        return d;
    }
};

}  // namespace quantmerge

#endif  // QUANTMERGE_DATES_HPP
