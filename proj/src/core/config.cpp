#include "egohome/core/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace egohome {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
    Config c;
    c.load_file(path);
    return c;
}

Config Config::from_string(const std::string& text) {
    Config c;
    c.load_string(text);
    return c;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    EGO_CONFIG_CHECK(in.good(), "config file not found: %s", path.c_str());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    std::string text = ss.str();
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.rfind("include ", 0) == 0) {
            std::string inc = trim(t.substr(8));
            auto inc_path = std::filesystem::path(inc);
            if (inc_path.is_relative()) inc_path = dir / inc_path;
            load_file(inc_path.string());
            continue;
        }
        size_t eq = t.find('=');
        EGO_CONFIG_CHECK(eq != std::string::npos, "%s:%d: expected `key = value`, got: %s",
                         path.c_str(), lineno, t.c_str());
        values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
}

void Config::load_string(const std::string& text, const std::string& origin) {
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        EGO_CONFIG_CHECK(t.rfind("include ", 0) != 0, "%s:%d: include not allowed in inline config",
                         origin.c_str(), lineno);
        size_t eq = t.find('=');
        EGO_CONFIG_CHECK(eq != std::string::npos, "%s:%d: expected `key = value`", origin.c_str(), lineno);
        values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
}

std::string Config::get_str(const std::string& key) const {
    auto it = values_.find(key);
    EGO_CONFIG_CHECK(it != values_.end(), "missing required config key: %s", key.c_str());
    return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int Config::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        return std::stoi(v);
    } catch (...) {
        throw ConfigError(strf("config key %s: not an integer: %s", key.c_str(), v.c_str()));
    }
}

int Config::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

int64_t Config::get_i64(const std::string& key, int64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_str(key);
    try {
        return std::stoll(v);
    } catch (...) {
        throw ConfigError(strf("config key %s: not an integer: %s", key.c_str(), v.c_str()));
    }
}

real Config::get_real(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        return std::stod(v);
    } catch (...) {
        throw ConfigError(strf("config key %s: not a number: %s", key.c_str(), v.c_str()));
    }
}

real Config::get_real(const std::string& key, real fallback) const {
    return has(key) ? get_real(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_str(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(strf("config key %s: not a boolean: %s", key.c_str(), v.c_str()));
}

std::vector<int> Config::get_ints(const std::string& key, const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    std::istringstream ss(get_str(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (...) {
            throw ConfigError(strf("config key %s: bad integer list element: %s", key.c_str(), tok.c_str()));
        }
    }
    return out;
}

std::string Config::echo() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

}  // namespace egohome
