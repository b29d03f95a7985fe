#include "lesionkit/csv.hpp"

#include "lesionkit/error.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace lesionkit::csv {

namespace {

std::vector<std::vector<std::string>> split_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool record_has_content = false;
    std::size_t line = 1;

    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        // A line consisting of nothing is skipped rather than read as one
        // empty field.
        if (record_has_content || fields.size() > 1 || !fields.front().empty()) {
            records.push_back(std::move(fields));
        }
        fields.clear();
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field.empty() || field_was_quoted) {
                throw ParseError("csv line " + std::to_string(line) + ": stray quote inside field");
            }
            in_quotes = true;
            field_was_quoted = true;
            record_has_content = true;
            break;
        case ',':
            end_field();
            record_has_content = true;
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break;
            field.push_back(c);
            break;
        case '\n':
            end_record();
            ++line;
            break;
        default:
            if (field_was_quoted) {
                throw ParseError("csv line " + std::to_string(line) + ": text after closing quote");
            }
            field.push_back(c);
            break;
        }
    }
    if (in_quotes) throw ParseError("csv: unterminated quoted field");
    if (!field.empty() || !fields.empty() || record_has_content) end_record();
    return records;
}

}  // namespace

Table Table::parse(std::string_view text) {
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
        text.remove_prefix(3);
    }
    auto records = split_records(text);
    if (records.empty()) throw ParseError("csv: missing header row");

    Table table;
    table.header_ = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != table.header_.size()) {
            throw ParseError("csv data row " + std::to_string(i) + ": expected " +
                             std::to_string(table.header_.size()) + " fields, found " +
                             std::to_string(records[i].size()));
        }
        table.rows_.push_back(std::move(records[i]));
    }
    return table;
}

bool Table::has_column(std::string_view name) const {
    return std::find(header_.begin(), header_.end(), name) != header_.end();
}

std::size_t Table::column(std::string_view name) const {
    auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end()) throw ParseError("csv: missing required column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header_.begin());
}

void Table::require_columns(const std::vector<std::string>& names) const {
    std::string missing;
    for (const auto& n : names) {
        if (!has_column(n)) missing += (missing.empty() ? "" : ", ") + n;
    }
    if (!missing.empty()) throw ParseError("csv: missing required column(s): " + missing);
}

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

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

std::string format_real(double value, int significant_digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

double parse_real(std::string_view text, std::string_view what) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty() || !std::isfinite(value)) {
        throw ParseError("invalid real for " + std::string(what) + ": '" + std::string(text) + "'");
    }
    return value;
}

long long parse_integer(std::string_view text, std::string_view what) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw ParseError("invalid integer for " + std::string(what) + ": '" + std::string(text) + "'");
    }
    return value;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace lesionkit::csv
