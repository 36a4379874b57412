#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sct::cli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// "section.key = value" text config. Repeatable keys (phantom.ellipse,
/// geometry.blocked) accumulate in order; everything else is last-wins.
struct RunConfig {
    std::map<std::string, std::vector<std::string>> entries;

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = entries.find(key);
        return it == entries.end() ? fallback : it->second.back();
    }
    std::string require(const std::string& key) const {
        auto it = entries.find(key);
        if (it == entries.end())
            throw ConfigError("missing required key '" + key + "'");
        return it->second.back();
    }
    const std::vector<std::string>& all(const std::string& key) const {
        static const std::vector<std::string> none;
        auto it = entries.find(key);
        return it == entries.end() ? none : it->second;
    }

    double get_num(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;

    void set(const std::string& key, const std::string& value) {
        entries[key] = {value};
    }

    /// Canonical text form; parsing it back yields the same config.
    std::string resolved_text() const;
};

RunConfig parse_config(const std::string& path);

}  // namespace sct::cli
