#pragma once

#include <cmath>
#include <vector>

#include "egohome/core/common.hpp"

namespace egohome::flow {

// Dense per-pixel displacement between consecutive frames, in pixels.
// u is horizontal (+x right), v vertical (+y down).
struct FlowField {
    int h = 0, w = 0;
    std::vector<real> u, v;
    std::vector<uint8_t> valid;

    FlowField() = default;
    FlowField(int height, int width)
        : h(height), w(width), u(size_t(height) * width, 0), v(size_t(height) * width, 0),
          valid(size_t(height) * width, 1) {}

    size_t idx(int y, int x) const { return size_t(y) * w + x; }
    size_t size() const { return u.size(); }

    bool operator==(const FlowField&) const = default;

    void check_finite() const {
        for (size_t i = 0; i < size(); ++i)
            if (valid[i]) EGO_CHECK(std::isfinite(u[i]) && std::isfinite(v[i]),
                                    "flow field: non-finite value on valid pixel %zu", i);
    }

    real max_magnitude() const {
        real m = 0;
        for (size_t i = 0; i < size(); ++i)
            if (valid[i]) m = std::max(m, std::hypot(u[i], v[i]));
        return m;
    }

    // Weighted (by magnitude) mean flow vector over valid pixels.
    void dominant(real& mu, real& mv) const {
        real su = 0, sv = 0, wsum = 0;
        for (size_t i = 0; i < size(); ++i) {
            if (!valid[i]) continue;
            const real m = std::hypot(u[i], v[i]);
            su += m * u[i];
            sv += m * v[i];
            wsum += m;
        }
        if (wsum <= 0) {
            mu = mv = 0;
            return;
        }
        mu = su / wsum;
        mv = sv / wsum;
    }
};

// Box downscale by integer factor; displacement values shrink with the
// resolution. A coarse pixel is valid when all its sources are.
inline FlowField downscale(const FlowField& f, int factor) {
    EGO_CHECK(factor >= 1 && f.h % factor == 0 && f.w % factor == 0,
              "flow downscale: factor %d does not divide %dx%d", factor, f.h, f.w);
    if (factor == 1) return f;
    FlowField out(f.h / factor, f.w / factor);
    const real inv = 1.0 / (factor * factor);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            real su = 0, sv = 0;
            uint8_t ok = 1;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    const size_t i = f.idx(y * factor + dy, x * factor + dx);
                    su += f.u[i];
                    sv += f.v[i];
                    ok &= f.valid[i];
                }
            const size_t o = out.idx(y, x);
            out.u[o] = su * inv / factor;
            out.v[o] = sv * inv / factor;
            out.valid[o] = ok;
        }
    return out;
}

}  // namespace egohome::flow
