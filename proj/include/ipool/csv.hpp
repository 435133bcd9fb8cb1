#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ipool::csv {

using Row = std::vector<std::string>;

/// Quotes a field when it contains a comma, quote, CR or LF (RFC 4180).
std::string escape(std::string_view field);

void write_row(std::ostream& out, const Row& row);

/// Shortest text that parses back to exactly `x`.
std::string format_number(double x);
/// Whole-field parse; throws std::invalid_argument mentioning `what`.
double parse_double(std::string_view s, std::string_view what);
long long parse_integer(std::string_view s, std::string_view what);

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Reads every record; quoted fields may span lines. Accepts LF or CRLF.
std::vector<Row> read_all(std::istream& in);

struct Table {
    Row header;
    std::vector<Row> rows;

    /// Column position; throws std::out_of_range naming the column.
    std::size_t column(std::string_view name) const;
};

/// First record is the header; every row must have the header's width.
Table read_table(std::istream& in);
Table read_table_file(const std::string& path);

}  // namespace ipool::csv
