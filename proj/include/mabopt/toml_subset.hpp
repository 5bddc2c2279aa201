#pragma once

/**
 * @file
 * Reader for the subset of TOML used by run configuration files:
 *
 *   # comment
 *   top_level = 1
 *   [section]
 *   number = -1.5e-3
 *   flag = true
 *   name = "text"
 *   events = [[720, 30, 0.0016667],
 *             [2160, 30, 0.0016667]]
 *
 * Inline tables, array-of-tables headers, dotted keys, dates and multi-line
 * strings are rejected. All numbers are stored as double; integer-valued
 * settings are checked where they are read.
 */

#include "mabopt/errors.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mabopt::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<double, bool, std::string, Array> data;
    int line = 0;

    bool is_number() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }
};

/// Key/value pairs of one section, in key order.
using Table = std::map<std::string, Value>;

struct Document {
    Table root;                            ///< keys before the first header
    std::map<std::string, Table> sections;
    std::map<std::string, int> section_lines;
};

inline ConfigError parse_error(int line, const std::string& msg) {
    return ConfigError("line " + std::to_string(line) + ": " + msg);
}

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    Document run() {
        Document doc;
        Table* current = &doc.root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                const int header_line = line_;
                ++pos_;
                if (!eof() && peek() == '[') throw parse_error(line_, "arrays of tables are not supported");
                skip_spaces();
                const std::string name = bare_key();
                skip_spaces();
                expect(']');
                end_of_line();
                if (doc.sections.count(name)) throw parse_error(header_line, "duplicate section [" + name + "]");
                current = &doc.sections[name];
                doc.section_lines[name] = header_line;
                continue;
            }
            const int key_line = line_;
            const std::string key = bare_key();
            skip_spaces();
            expect('=');
            skip_spaces();
            Value v = value();
            v.line = key_line;
            end_of_line();
            if (!current->emplace(key, std::move(v)).second) {
                throw parse_error(key_line, "duplicate key '" + key + "'");
            }
        }
        return doc;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;

    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return s_[pos_]; }

    void expect(char c) {
        if (eof() || peek() != c) throw parse_error(line_, std::string("expected '") + c + "'");
        ++pos_;
    }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    void skip_comment() {
        if (!eof() && peek() == '#') {
            while (!eof() && peek() != '\n') ++pos_;
        }
    }

    bool newline() {
        if (eof()) return false;
        if (peek() == '\r' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '\n') ++pos_;
        if (peek() != '\n') return false;
        ++pos_;
        ++line_;
        return true;
    }

    void skip_blank_lines() {
        while (true) {
            skip_spaces();
            skip_comment();
            if (!newline()) return;
        }
    }

    /// Whitespace, comments and newlines, as allowed inside arrays.
    void skip_array_space() {
        while (true) {
            skip_spaces();
            skip_comment();
            if (!newline()) return;
        }
    }

    void end_of_line() {
        skip_spaces();
        skip_comment();
        if (!eof() && !newline()) throw parse_error(line_, "unexpected trailing characters");
    }

    static bool key_char(char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    }

    std::string bare_key() {
        const std::size_t start = pos_;
        while (!eof() && key_char(peek())) ++pos_;
        if (pos_ == start) throw parse_error(line_, "expected a key");
        if (!eof() && peek() == '.') throw parse_error(line_, "dotted keys are not supported");
        return std::string(s_.substr(start, pos_ - start));
    }

    Value value() {
        if (eof()) throw parse_error(line_, "missing value");
        const char c = peek();
        if (c == '"') return {basic_string(), line_};
        if (c == '\'') return {literal_string(), line_};
        if (c == '[') return {array(), line_};
        if (c == '{') throw parse_error(line_, "inline tables are not supported");
        return scalar();
    }

    std::string basic_string() {
        ++pos_;
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') throw parse_error(line_, "unterminated string");
            const char c = s_[pos_++];
            if (c == '"') return out;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (eof()) throw parse_error(line_, "unterminated string");
            switch (s_[pos_++]) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                default: throw parse_error(line_, "unsupported escape sequence");
            }
        }
    }

    std::string literal_string() {
        ++pos_;
        const std::size_t start = pos_;
        while (!eof() && peek() != '\'' && peek() != '\n') ++pos_;
        if (eof() || peek() != '\'') throw parse_error(line_, "unterminated string");
        return std::string(s_.substr(start, pos_++ - start));
    }

    Array array() {
        ++pos_;
        Array out;
        skip_array_space();
        while (!eof() && peek() != ']') {
            const int item_line = line_;
            Value v = value();
            v.line = item_line;
            out.push_back(std::move(v));
            skip_array_space();
            if (!eof() && peek() == ',') {
                ++pos_;
                skip_array_space();
            } else {
                break;
            }
        }
        if (eof() || peek() != ']') throw parse_error(line_, "unterminated array");
        ++pos_;
        return out;
    }

    Value scalar() {
        const int at = line_;
        const std::size_t start = pos_;
        while (!eof() && peek() != ',' && peek() != ']' && peek() != '#' && peek() != '\n' && peek() != '\r' &&
               peek() != ' ' && peek() != '\t') {
            ++pos_;
        }
        const std::string_view tok = s_.substr(start, pos_ - start);
        if (tok == "true") return {true, at};
        if (tok == "false") return {false, at};
        return {number(tok, at), at};
    }

    static double number(std::string_view tok, int at) {
        std::string digits;
        for (std::size_t i = 0; i < tok.size(); ++i) {
            if (tok[i] != '_') {
                digits.push_back(tok[i]);
                continue;
            }
            const bool between = i > 0 && i + 1 < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i - 1])) &&
                                 std::isdigit(static_cast<unsigned char>(tok[i + 1]));
            if (!between) throw parse_error(at, "misplaced '_' in number '" + std::string(tok) + "'");
        }
        std::string_view body = digits;
        if (!body.empty() && body.front() == '+') body.remove_prefix(1);
        double v = 0.0;
        const auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
        if (body.empty() || ec != std::errc() || end != body.data() + body.size() || !std::isfinite(v)) {
            throw parse_error(at, "invalid value '" + std::string(tok) + "'");
        }
        return v;
    }
};

}  // namespace detail

/// Parses @p text; errors carry the 1-based line number.
inline Document parse(std::string_view text) { return detail::Parser(text).run(); }

}  // namespace mabopt::toml
