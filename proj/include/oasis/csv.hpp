#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oasis::csv {

/// Splits one line on `delim`, honouring double-quoted fields ("" escapes a quote).
std::vector<std::string> split_line(std::string_view line, char delim = ',');

std::string trim(std::string_view s);

/// Strict numeric parse of the whole field; empty or junk gives nullopt.
std::optional<double> parse_double(std::string_view field);

/// Shortest text that reads back to the identical double.
std::string format_double(double v);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // 1-based line numbers of each row in the source (header is line 1).
    std::vector<std::size_t> line_numbers;
};

/// Reads a header plus rows; blank lines are skipped. Rows are not required
/// to match the header width, callers decide how to treat ragged rows.
Table read_table(std::istream& in, char delim = ',');

}  // namespace oasis::csv
