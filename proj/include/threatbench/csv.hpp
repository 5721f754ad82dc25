// SPDX-License-Identifier: Apache-2.0
//
// Minimal RFC 4180 CSV reading/writing: quoted fields, "" escapes,
// embedded newlines, CRLF line endings.
#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tb {

struct CsvRecord {
    std::vector<std::string> fields;
    std::size_t record_number = 0;  // 1-based, header counts as record 1
};

class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    // Reads one logical record (may span physical lines inside quotes).
    // Returns false at end of input.
    bool next(CsvRecord& out) {
        int c = in_.get();
        if (c == std::istream::traits_type::eof()) return false;
        in_.unget();

        out.fields.clear();
        out.record_number = ++records_read_;
        std::string field;
        bool in_quotes = false;
        while (true) {
            c = in_.get();
            if (c == std::istream::traits_type::eof()) {
                if (in_quotes) {
                    throw std::runtime_error("csv: unterminated quoted field in record " +
                                             std::to_string(out.record_number));
                }
                out.fields.push_back(std::move(field));
                return true;
            }
            char ch = static_cast<char>(c);
            if (in_quotes) {
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    field.push_back(ch);
                }
            } else if (ch == '"' && field.empty()) {
                in_quotes = true;
            } else if (ch == ',') {
                out.fields.push_back(std::move(field));
                field.clear();
            } else if (ch == '\r' && in_.peek() == '\n') {
                in_.get();
                out.fields.push_back(std::move(field));
                return true;
            } else if (ch == '\n') {
                out.fields.push_back(std::move(field));
                return true;
            } else {
                field.push_back(ch);
            }
        }
    }

private:
    std::istream& in_;
    std::size_t records_read_ = 0;
};

inline std::string csv_escape(const std::string& s) {
    bool needs_quotes = false;
    for (char c : s) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quotes = true;
            break;
        }
    }
    if (!needs_quotes) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline void csv_write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << csv_escape(fields[i]);
    }
    os << '\n';
}

}  // namespace tb
