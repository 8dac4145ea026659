#pragma once

#include <map>
#include <string>
#include <vector>

#include "egohome/core/common.hpp"

namespace egohome {

// Layered plain-text config: `key = value` lines with dotted keys,
// `include <relative-path>` directives, `#` comments. Later assignments
// (including CLI flag overrides) win.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void load_file(const std::string& path);
    void load_string(const std::string& text, const std::string& origin = "<string>");

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    int64_t get_i64(const std::string& key, int64_t fallback) const;
    real get_real(const std::string& key) const;
    real get_real(const std::string& key, real fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

    // Canonical serialization (sorted keys) used as the config echo embedded
    // in checkpoints, manifests and reports.
    std::string echo() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace egohome
