#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lesionkit::csv {

// RFC 4180 style reader: comma separated, double-quoted fields may hold
// commas, quotes ("") and newlines. Accepts LF and CRLF line endings.
class Table {
public:
    static Table parse(std::string_view text);

    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    // Index of a header column, or throws ParseError naming the column.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
    // Throws ParseError listing every missing column.
    void require_columns(const std::vector<std::string>& names) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trip formatting is not wanted here: outputs are compared
// byte-for-byte across runs, so every real is printed with %.*g.
std::string format_real(double value, int significant_digits = 17);

double parse_real(std::string_view text, std::string_view what);
long long parse_integer(std::string_view text, std::string_view what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace lesionkit::csv
