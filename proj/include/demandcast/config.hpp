#pragma once

// Key-value run configuration: `key = value` lines, `#` comments. Values are
// scalars or comma-separated lists. The full pipeline key registry lives in
// pipeline.hpp; unknown keys are rejected there before any stage runs.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace demandcast {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValueConfig {
public:
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>") {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#') continue;
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            std::string key = strip(s.substr(0, eq));
            std::string value = strip(s.substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            if (cfg.values_.count(key))
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    std::string require_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
        return it->second;
    }

    int64_t get_int(const std::string& key, int64_t fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_int(key, it->second);
    }
    uint64_t get_u64(const std::string& key, uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not an unsigned integer: " + it->second);
        }
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }
    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: " + it->second);
    }
    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        for (const std::string& part : split_csv(it->second)) out.push_back(to_double(key, part));
        return out;
    }
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<int> out;
        for (const std::string& part : split_csv(it->second)) out.push_back(static_cast<int>(to_int(key, part)));
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    void ensure_known(const std::set<std::string>& known) const {
        std::string unknown;
        for (const auto& [k, v] : values_)
            if (!known.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty()) throw ConfigError(origin_ + ": unknown config keys: " + unknown);
    }

private:
    static std::string strip(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }
    static std::vector<std::string> split_csv(const std::string& s) {
        std::vector<std::string> parts;
        std::string cur;
        std::istringstream in(s);
        while (std::getline(in, cur, ',')) parts.push_back(strip(cur));
        return parts;
    }
    int64_t to_int(const std::string& key, const std::string& v) const {
        try {
            size_t pos = 0;
            int64_t r = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not an integer: " + v);
        }
    }
    double to_double(const std::string& key, const std::string& v) const {
        try {
            size_t pos = 0;
            double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not a number: " + v);
        }
    }

    std::string origin_;
    std::map<std::string, std::string> values_;
};

}  // namespace demandcast
