#include "ipool/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace ipool::csv {

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << escape(row[i]);
    }
    out << "\r\n";
}

std::string format_number(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

namespace {

template <class T>
T parse_whole(std::string_view s, std::string_view what) {
    T value{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw std::invalid_argument("bad " + std::string(what) + " '" + std::string(s) + "'");
    return value;
}

}  // namespace

double parse_double(std::string_view s, std::string_view what) { return parse_whole<double>(s, what); }
long long parse_integer(std::string_view s, std::string_view what) { return parse_whole<long long>(s, what); }

std::vector<Row> read_all(std::istream& in) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool quoted = false, field_started = false, after_quote = false;
    std::size_t line = 1;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = after_quote = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };
    char c;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field += '"';
                } else {
                    quoted = false;
                    after_quote = true;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case ',':
                end_field();
                break;
            case '\r':
                if (in.peek() == '\n') in.get();
                [[fallthrough]];
            case '\n':
                end_row();
                ++line;
                break;
            case '"':
                if (field_started || after_quote) throw ParseError("stray quote inside unquoted field", line);
                quoted = true;
                field_started = true;
                break;
            default:
                if (after_quote) throw ParseError("characters after closing quote", line);
                field += c;
                field_started = true;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", line);
    if (field_started || after_quote || !row.empty()) end_row();
    return rows;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw std::out_of_range("missing column '" + std::string(name) + "'");
}

Table read_table(std::istream& in) {
    auto rows = read_all(in);
    if (rows.empty()) throw ParseError("empty CSV input", 1);
    Table t;
    t.header = std::move(rows.front());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != t.header.size()) {
            throw ParseError("row has " + std::to_string(rows[r].size()) + " fields, header has " +
                                 std::to_string(t.header.size()),
                             r + 1);
        }
        t.rows.push_back(std::move(rows[r]));
    }
    return t;
}

Table read_table_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_table(in);
}

}  // namespace ipool::csv
