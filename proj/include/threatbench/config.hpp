// SPDX-License-Identifier: Apache-2.0
//
// Declarative key-value configuration files: a small TOML subset with
// [sections], `key = value` pairs, # comments, and values that are strings,
// numbers, booleans, or flat arrays of those.
#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tb {

struct ConfigValue {
    std::variant<std::string, double, bool, std::vector<std::string>, std::vector<double>> v;
};

class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    static ConfigFile parse(const std::string& text, const std::string& origin = "<string>") {
        ConfigFile cfg;
        cfg.raw_text_ = text;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = strip(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']') fail(origin, line_no, "unterminated section header");
                section = strip(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
            const std::string key = strip(t.substr(0, eq));
            const std::string value = strip(t.substr(eq + 1));
            if (key.empty() || value.empty()) fail(origin, line_no, "empty key or value");
            cfg.values_[section + "." + key] = parse_value(value, origin, line_no);
        }
        return cfg;
    }

    bool has(const std::string& dotted_key) const { return values_.count(dotted_key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* s = std::get_if<std::string>(&it->second.v)) return *s;
        throw std::runtime_error("config: " + key + " is not a string");
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* d = std::get_if<double>(&it->second.v)) return *d;
        throw std::runtime_error("config: " + key + " is not a number");
    }

    long long get_int(const std::string& key, long long fallback) const {
        return static_cast<long long>(get_double(key, static_cast<double>(fallback)));
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* b = std::get_if<bool>(&it->second.v)) return *b;
        throw std::runtime_error("config: " + key + " is not a boolean");
    }

    std::vector<std::string> get_string_list(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* l = std::get_if<std::vector<std::string>>(&it->second.v)) return *l;
        throw std::runtime_error("config: " + key + " is not a string array");
    }

    std::vector<long long> get_int_list(const std::string& key,
                                        const std::vector<long long>& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* l = std::get_if<std::vector<double>>(&it->second.v)) {
            std::vector<long long> out;
            for (double d : *l) out.push_back(static_cast<long long>(d));
            return out;
        }
        throw std::runtime_error("config: " + key + " is not a number array");
    }

    const std::string& raw_text() const { return raw_text_; }

private:
    static std::string strip(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    [[noreturn]] static void fail(const std::string& origin, std::size_t line, const std::string& what) {
        throw std::runtime_error("config: " + origin + ":" + std::to_string(line) + ": " + what);
    }

    static ConfigValue parse_scalar(const std::string& s, const std::string& origin, std::size_t line) {
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
            return {s.substr(1, s.size() - 2)};
        }
        if (s == "true") return {true};
        if (s == "false") return {false};
        try {
            std::size_t used = 0;
            const double d = std::stod(s, &used);
            if (used == s.size()) return {d};
        } catch (...) {
        }
        fail(origin, line, "cannot parse value `" + s + "`");
    }

    static ConfigValue parse_value(const std::string& s, const std::string& origin, std::size_t line) {
        if (s.front() != '[') {
            // strip trailing comment on scalar values outside strings
            std::string t = s;
            if (t.front() != '"') {
                const auto hash = t.find('#');
                if (hash != std::string::npos) t = strip(t.substr(0, hash));
            }
            return parse_scalar(t, origin, line);
        }
        if (s.back() != ']') fail(origin, line, "unterminated array");
        const std::string inner = strip(s.substr(1, s.size() - 2));
        std::vector<std::string> items;
        std::string cur;
        bool in_str = false;
        for (char c : inner) {
            if (c == '"') in_str = !in_str;
            if (c == ',' && !in_str) {
                items.push_back(strip(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!strip(cur).empty()) items.push_back(strip(cur));

        bool all_strings = !items.empty();
        for (const auto& item : items) {
            if (item.empty() || item.front() != '"') all_strings = false;
        }
        if (all_strings) {
            std::vector<std::string> out;
            for (const auto& item : items) out.push_back(item.substr(1, item.size() - 2));
            return {out};
        }
        std::vector<double> out;
        for (const auto& item : items) {
            const ConfigValue v = parse_scalar(item, origin, line);
            if (const auto* d = std::get_if<double>(&v.v)) out.push_back(*d);
            else fail(origin, line, "mixed array types");
        }
        return {out};
    }

    std::map<std::string, ConfigValue> values_;
    std::string raw_text_;
};

}  // namespace tb
