#pragma once

#include <fstream>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "saemvs/errors.hpp"

namespace saemvs {

/// Minimal TOML-style configuration: [section] / [section.sub] headers and
/// key = value lines with strings, numbers, booleans and flat arrays. Keys
/// are flattened to "section.key".
class ConfigFile {
public:
    using Value = std::variant<bool, double, std::string, std::vector<double>,
                               std::vector<std::string>>;

    static ConfigFile parse(const std::string& text, const std::string& origin = "<config>") {
        ConfigFile cfg;
        std::string section;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;
            if (auto hash = find_comment(line); hash != std::string::npos) line.resize(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(line_no) +
                                      ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string raw = trim(line.substr(eq + 1));
            if (key.empty() || raw.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key or value");
            const std::string full = section.empty() ? key : section + "." + key;
            cfg.values_[full] = parse_value(raw, origin, line_no);
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(text, path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    double number(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const double* v = std::get_if<double>(&it->second)) return *v;
        throw ConfigError("config key '" + key + "' is not a number");
    }
    int integer(const std::string& key, int fallback) const {
        const double v = number(key, fallback);
        if (v != static_cast<long long>(v))
            throw ConfigError("config key '" + key + "' is not an integer");
        return static_cast<int>(v);
    }
    bool boolean(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const bool* v = std::get_if<bool>(&it->second)) return *v;
        throw ConfigError("config key '" + key + "' is not a boolean");
    }
    std::string text(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const std::string* v = std::get_if<std::string>(&it->second)) return *v;
        throw ConfigError("config key '" + key + "' is not a string");
    }
    std::vector<double> numbers(const std::string& key,
                                const std::vector<double>& fallback = {}) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* v = std::get_if<std::vector<double>>(&it->second)) return *v;
        if (const double* v = std::get_if<double>(&it->second)) return {*v};
        throw ConfigError("config key '" + key + "' is not a numeric array");
    }
    std::vector<std::string> texts(const std::string& key,
                                   const std::vector<std::string>& fallback = {}) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (const auto* v = std::get_if<std::vector<std::string>>(&it->second)) return *v;
        if (const std::string* v = std::get_if<std::string>(&it->second)) return {*v};
        throw ConfigError("config key '" + key + "' is not a string array");
    }

    const std::map<std::string, Value>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    // '#' starts a comment unless inside a quoted string
    static std::size_t find_comment(const std::string& line) {
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) return i;
        }
        return std::string::npos;
    }

    static Value parse_scalar(const std::string& raw, const std::string& origin,
                              std::size_t line_no) {
        if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
            return raw.substr(1, raw.size() - 2);
        if (raw == "true") return true;
        if (raw == "false") return false;
        try {
            std::size_t used = 0;
            const double v = std::stod(raw, &used);
            if (used == raw.size()) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": cannot parse value '" +
                          raw + "'");
    }

    static Value parse_value(const std::string& raw, const std::string& origin,
                             std::size_t line_no) {
        if (raw.front() != '[') return parse_scalar(raw, origin, line_no);
        if (raw.back() != ']')
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated array");
        std::vector<std::string> items;
        std::string item;
        bool in_string = false;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            const char c = raw[i];
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                items.push_back(trim(item));
                item.clear();
            } else {
                item += c;
            }
        }
        if (!trim(item).empty()) items.push_back(trim(item));
        if (items.empty()) return std::vector<double>{};
        const bool strings = !items[0].empty() && items[0].front() == '"';
        if (strings) {
            std::vector<std::string> out;
            for (const auto& s : items)
                out.push_back(std::get<std::string>(parse_scalar(s, origin, line_no)));
            return out;
        }
        std::vector<double> out;
        for (const auto& s : items)
            out.push_back(std::get<double>(parse_scalar(s, origin, line_no)));
        return out;
    }

    std::map<std::string, Value> values_;
};

} // namespace saemvs
