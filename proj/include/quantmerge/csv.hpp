#ifndef QUANTMERGE_CSV_HPP
#define QUANTMERGE_CSV_HPP

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "quantmerge/errors.hpp"

// Plain comma-delimited tables with a mandatory header row. Fields never
// contain commas or quotes in any of the interchange formats, so no quoting
// layer is needed.

namespace quantmerge::csv {

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            std::string_view f = line.substr(start, i - start);
            // trim surrounding blanks
            while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
            while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r'))
                f.remove_suffix(1);
            out.emplace_back(f);
            start = i + 1;
        }
    }
    return out;
}

inline double parse_double(const std::string& field, const std::string& context) {
    if (field.empty()) throw DataError(context + ": empty numeric field");
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || errno == ERANGE)
        throw DataError(context + ": cannot parse '" + field + "' as a number");
    return v;
}

inline long long parse_int(const std::string& field, const std::string& context) {
    if (field.empty()) throw DataError(context + ": empty integer field");
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(field.c_str(), &end, 10);
    if (end != field.c_str() + field.size() || errno == ERANGE)
        throw DataError(context + ": cannot parse '" + field + "' as an integer");
    return v;
}

inline unsigned long long parse_uint64(const std::string& field, const std::string& context) {
    if (field.empty() || field[0] == '-')
        throw DataError(context + ": cannot parse '" + field + "' as an unsigned integer");
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(field.c_str(), &end, 10);
    if (end != field.c_str() + field.size() || errno == ERANGE)
        throw DataError(context + ": cannot parse '" + field + "' as an unsigned integer");
    return v;
}

/// Shortest decimal form that parses back to the exact same double.
inline std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

/// Checks that the header holds exactly the expected column names, in order.
inline void expect_header(const std::vector<std::string>& header,
                          const std::vector<std::string>& expected,
                          const std::string& path) {
    if (header.size() != expected.size()) {
        throw DataError(path + ": expected " + std::to_string(expected.size()) +
                        " columns, found " + std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (header[i] != expected[i])
            throw DataError(path + ": column " + std::to_string(i + 1) + " must be '" +
                            expected[i] + "', found '" + header[i] + "'");
    }
}

}  // namespace quantmerge::csv

#endif  // QUANTMERGE_CSV_HPP
