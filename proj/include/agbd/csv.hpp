#pragma once

#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "agbd/error.hpp"

namespace agbd {

// Minimal strict CSV: comma-delimited, no quoting or escaping, one header
// row. All toolkit file contracts use plain alphanumeric fields, so the
// simple split is the format, not a shortcut.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // row i came from file line i + 2

    int column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline CsvTable read_csv(std::istream& in, const std::string& module) {
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw Error(module, "empty CSV stream, expected a header row");
    table.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != table.header.size())
            throw Error(module, "row " + std::to_string(table.rows.size() + 2) + ": expected " +
                                    std::to_string(table.header.size()) + " fields, got " +
                                    std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    return table;
}

// Whole-token floating-point parse; rejects trailing garbage and empty text.
inline bool try_parse_double(std::string_view token, double& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    if (first == last) return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

inline bool try_parse_long(std::string_view token, long& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    if (first == last) return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

}  // namespace agbd
