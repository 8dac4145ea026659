#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "egohome/core/common.hpp"

namespace egohome {

// Deterministic RNG owned by this project so that streams are reproducible
// bit-for-bit independent of the standard library's distribution choices.
// xoshiro256** seeded through splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
        has_spare_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    real uniform() { return real(next_u64() >> 11) * 0x1.0p-53; }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        EGO_CHECK(n > 0, "uniform_int: n must be positive, got %d", n);
        return int(next_u64() % uint64_t(n));
    }

    // Standard normal via Box-Muller (deterministic, platform independent).
    real normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        real u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const real u2 = uniform();
        const real r = std::sqrt(-2.0 * std::log(u1));
        const real a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Derive an independent substream from a seed and a list of stream ids.
    static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> ids) {
        uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
        for (uint64_t id : ids) {
            h ^= id + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h = splitmix64(h);
        }
        return h;
    }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    static uint64_t splitmix64(uint64_t&& x) {
        uint64_t v = x;
        return splitmix64(v);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    bool has_spare_ = false;
    real spare_ = 0;
};

}  // namespace egohome
