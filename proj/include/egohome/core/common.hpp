#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace egohome {

// All model/sim math runs in double; keeps the metric oracles and
// finite-difference gradient checks away from float32 noise.
using real = double;

constexpr const char* kToolVersion = "egohome 0.1.0";

inline std::string strf(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    char buf[1024];
    vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

#define EGO_CHECK(cond, ...)                                                  \
    do {                                                                      \
        if (!(cond)) throw std::runtime_error(::egohome::strf(__VA_ARGS__)); \
    } while (0)

#define EGO_CONFIG_CHECK(cond, ...)                                            \
    do {                                                                       \
        if (!(cond)) throw ::egohome::ConfigError(::egohome::strf(__VA_ARGS__)); \
    } while (0)

}  // namespace egohome
