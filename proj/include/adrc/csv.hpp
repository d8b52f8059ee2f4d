#pragma once

#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// RFC 4180 CSV: comma-separated fields, double-quote quoting, embedded
// quotes doubled, quoted fields may span lines. Accepts LF and CRLF.

namespace adrc {

struct CsvError : std::runtime_error {
    explicit CsvError(const std::string& what) : std::runtime_error(what) {}
};

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // row has at least one field begun
    size_t i = 0;
    const size_t n = text.size();

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        field_started = false;
    };

    while (i < n) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && text[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                field.push_back(c);
                ++i;
            }
        } else {
            switch (c) {
                case '"':
                    if (!field.empty())
                        throw CsvError("quote inside unquoted field near offset " + std::to_string(i));
                    in_quotes = true;
                    ++i;
                    break;
                case ',':
                    end_field();
                    ++i;
                    break;
                case '\r':
                    if (i + 1 < n && text[i + 1] == '\n') {
                        end_row();
                        i += 2;
                    } else {
                        field.push_back(c);  // lone CR, keep it
                        ++i;
                    }
                    break;
                case '\n':
                    end_row();
                    ++i;
                    break;
                default:
                    field.push_back(c);
                    ++i;
            }
        }
    }
    if (in_quotes) throw CsvError("unterminated quoted field at end of input");
    if (field_started || !field.empty()) end_row();  // final row without newline
    return rows;
}

inline std::string csv_quote(std::string_view field) {
    bool needs_quotes = false;
    for (char c : field)
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quotes = true;
            break;
        }
    if (!needs_quotes) return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_csv_row(std::ostream& os, std::span<const std::string> fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << csv_quote(fields[i]);
    }
    os << '\n';
}

}  // namespace adrc
