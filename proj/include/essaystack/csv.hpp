#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "essaystack/core.hpp"

namespace essaystack::csv {

struct Row {
    std::size_t line = 0; // 1-based physical line where the record starts
    std::vector<std::string> fields;
};

/// RFC-4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF.
/// A leading UTF-8 BOM is skipped and blank lines are ignored.
inline std::vector<Row> parse(std::string_view text) {
    std::vector<Row> rows;
    std::size_t pos = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
    std::size_t line = 1;

    while (pos < text.size()) {
        Row row;
        row.line = line;
        std::string field;
        bool at_field_start = true;
        bool quoted = false;
        bool record_done = false;

        while (!record_done) {
            if (pos >= text.size()) {
                if (quoted) throw ParseError("line " + std::to_string(row.line) + ": unterminated quoted field");
                row.fields.push_back(std::move(field));
                break;
            }
            const char c = text[pos];
            if (quoted) {
                if (c == '"') {
                    if (pos + 1 < text.size() && text[pos + 1] == '"') {
                        field.push_back('"');
                        pos += 2;
                    } else {
                        quoted = false;
                        ++pos;
                        if (pos < text.size() && text[pos] != ',' && text[pos] != '\n' && text[pos] != '\r')
                            throw ParseError("line " + std::to_string(line) + ": unexpected character after closing quote");
                    }
                } else {
                    if (c == '\n') ++line;
                    field.push_back(c);
                    ++pos;
                }
                continue;
            }
            switch (c) {
            case '"':
                if (!at_field_start)
                    throw ParseError("line " + std::to_string(line) + ": quote inside unquoted field");
                quoted = true;
                at_field_start = false;
                ++pos;
                break;
            case ',':
                row.fields.push_back(std::move(field));
                field.clear();
                at_field_start = true;
                ++pos;
                break;
            case '\r':
                ++pos;
                if (pos < text.size() && text[pos] == '\n') ++pos;
                ++line;
                row.fields.push_back(std::move(field));
                record_done = true;
                break;
            case '\n':
                ++pos;
                ++line;
                row.fields.push_back(std::move(field));
                record_done = true;
                break;
            default:
                field.push_back(c);
                at_field_start = false;
                ++pos;
            }
        }
        const bool blank = row.fields.size() == 1 && row.fields[0].empty();
        if (!blank) rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<Row> parse_file(const std::string& path) { return parse(read_file(path)); }

inline std::string escape(std::string_view field) {
    const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("format", "cannot format number");
    return std::string(buf, end);
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + path);
}

} // namespace essaystack::csv
