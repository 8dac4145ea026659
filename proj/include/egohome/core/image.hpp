#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "egohome/core/common.hpp"

namespace egohome {

// Interleaved row-major image, values in [0,1].
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<real> data;

    Image() = default;
    Image(int height, int width, int channels, real fill = 0)
        : h(height), w(width), c(channels), data(size_t(height) * width * channels, fill) {}

    real& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
    real at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }

    size_t numel() const { return data.size(); }

    bool operator==(const Image&) const = default;

    void clamp01() {
        for (auto& v : data) v = std::clamp<real>(v, 0.0, 1.0);
    }

    // Snap every value to the nearest 8-bit level. The simulator renders in
    // quantized space so a PNG round trip is exact.
    void quantize8() {
        for (auto& v : data) v = std::round(std::clamp<real>(v, 0.0, 1.0) * 255.0) / 255.0;
    }
};

// Box-filter downscale by an integer factor (all dims must divide).
inline Image downscale(const Image& src, int factor) {
    EGO_CHECK(factor >= 1 && src.h % factor == 0 && src.w % factor == 0,
              "downscale: factor %d does not divide %dx%d", factor, src.h, src.w);
    if (factor == 1) return src;
    Image out(src.h / factor, src.w / factor, src.c);
    const real inv = 1.0 / (factor * factor);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) {
                real s = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) s += src.at(y * factor + dy, x * factor + dx, ch);
                out.at(y, x, ch) = s * inv;
            }
    return out;
}

inline real mean_abs_diff(const Image& a, const Image& b) {
    EGO_CHECK(a.h == b.h && a.w == b.w && a.c == b.c, "mean_abs_diff: shape mismatch");
    real s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
    return a.data.empty() ? 0 : s / real(a.data.size());
}

// Bilinear sample with border clamp.
inline real bilinear(const Image& img, real y, real x, int ch) {
    x = std::clamp<real>(x, 0.0, img.w - 1.0);
    y = std::clamp<real>(y, 0.0, img.h - 1.0);
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
    const real fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch)) +
           fy * ((1 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch));
}

}  // namespace egohome
