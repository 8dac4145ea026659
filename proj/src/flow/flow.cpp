#include "egohome/flow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace egohome::flow {

real aee(const FlowField& pred, const FlowField& gt) {
    EGO_CHECK(pred.h == gt.h && pred.w == gt.w, "aee: shape mismatch (%dx%d vs %dx%d)",
              pred.h, pred.w, gt.h, gt.w);
    real sum = 0;
    size_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!pred.valid[i] || !gt.valid[i]) continue;
        sum += std::hypot(pred.u[i] - gt.u[i], pred.v[i] - gt.v[i]);
        ++n;
    }
    EGO_CHECK(n > 0, "aee: no jointly-valid pixels");
    return sum / real(n);
}

namespace {

struct Gray {
    int h, w;
    std::vector<real> v;
    real at(int y, int x) const { return v[size_t(y) * w + x]; }
    real& at(int y, int x) { return v[size_t(y) * w + x]; }
    real sample(real y, real x) const {
        x = std::clamp<real>(x, 0.0, w - 1.0);
        y = std::clamp<real>(y, 0.0, h - 1.0);
        const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const real fx = x - x0, fy = y - y0;
        return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
               fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
    }
};

Gray to_gray(const Image& img) {
    Gray g{img.h, img.w, std::vector<real>(size_t(img.h) * img.w)};
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (img.c == 1)
                g.at(y, x) = img.at(y, x, 0);
            else
                g.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
        }
    return g;
}

Gray half(const Gray& g) {
    Gray out{g.h / 2, g.w / 2, std::vector<real>(size_t(g.h / 2) * (g.w / 2))};
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(y, x) = 0.25 * (g.at(2 * y, 2 * x) + g.at(2 * y, 2 * x + 1) +
                                   g.at(2 * y + 1, 2 * x) + g.at(2 * y + 1, 2 * x + 1));
    return out;
}

// 3x3 median on each flow component; standard outlier suppression between
// refinement passes.
void median_filter(FlowField& f) {
    auto one = [&](std::vector<real>& plane) {
        std::vector<real> out = plane;
        real win[9];
        for (int y = 1; y < f.h - 1; ++y)
            for (int x = 1; x < f.w - 1; ++x) {
                int k = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) win[k++] = plane[f.idx(y + dy, x + dx)];
                std::nth_element(win, win + 4, win + 9);
                out[f.idx(y, x)] = win[4];
            }
        plane = out;
    };
    one(f.u);
    one(f.v);
}

}  // namespace

FlowField estimate_flow(const Image& a, const Image& b, const LkParams& params) {
    EGO_CHECK(a.h == b.h && a.w == b.w, "estimate_flow: shape mismatch");
    EGO_CHECK(a.h >= 8 && a.w >= 8, "estimate_flow: image too small");

    std::vector<Gray> pyr_a{to_gray(a)}, pyr_b{to_gray(b)};
    for (int l = 1; l < params.pyramid_levels; ++l) {
        if (pyr_a.back().h < 2 * params.window || pyr_a.back().w < 2 * params.window) break;
        pyr_a.push_back(half(pyr_a.back()));
        pyr_b.push_back(half(pyr_b.back()));
    }

    const int levels = int(pyr_a.size());
    const int r = params.window / 2;

    // Coarse-to-fine refinement from a given coarsest-level seed.
    auto run = [&](real seed_u, real seed_v, std::vector<real>& eig) {
        FlowField flow(pyr_a.back().h, pyr_a.back().w);
        for (size_t i = 0; i < flow.size(); ++i) {
            flow.u[i] = seed_u;
            flow.v[i] = seed_v;
        }
        for (int l = levels - 1; l >= 0; --l) {
            const Gray& ga = pyr_a[size_t(l)];
            const Gray& gb = pyr_b[size_t(l)];

            if (l != levels - 1) {
                FlowField up(ga.h, ga.w);
                for (int y = 0; y < ga.h; ++y)
                    for (int x = 0; x < ga.w; ++x) {
                        const int cy = std::min(y / 2, flow.h - 1), cx = std::min(x / 2, flow.w - 1);
                        const size_t ci = flow.idx(cy, cx);
                        const size_t i = up.idx(y, x);
                        up.u[i] = 2 * flow.u[ci];
                        up.v[i] = 2 * flow.v[ci];
                    }
                flow = up;
            }
            eig.assign(flow.size(), 0);

            Gray ix{ga.h, ga.w, std::vector<real>(size_t(ga.h) * ga.w, 0)};
            Gray iy = ix;
            for (int y = 1; y < ga.h - 1; ++y)
                for (int x = 1; x < ga.w - 1; ++x) {
                    ix.at(y, x) = 0.5 * (ga.at(y, x + 1) - ga.at(y, x - 1));
                    iy.at(y, x) = 0.5 * (ga.at(y + 1, x) - ga.at(y - 1, x));
                }

            for (int iter = 0; iter < params.iterations; ++iter) {
                for (int y = r; y < ga.h - r; ++y)
                    for (int x = r; x < ga.w - r; ++x) {
                        const size_t i = flow.idx(y, x);
                        real gxx = 0, gxy = 0, gyy = 0, bx = 0, by = 0;
                        for (int wy = -r; wy <= r; ++wy)
                            for (int wx = -r; wx <= r; ++wx) {
                                const real gx = ix.at(y + wy, x + wx);
                                const real gy = iy.at(y + wy, x + wx);
                                const real it = gb.sample(y + wy + flow.v[i], x + wx + flow.u[i]) -
                                                ga.at(y + wy, x + wx);
                                gxx += gx * gx;
                                gxy += gx * gy;
                                gyy += gy * gy;
                                bx -= gx * it;
                                by -= gy * it;
                            }
                        const real npix = real((2 * r + 1) * (2 * r + 1));
                        const real tr = gxx + gyy;
                        const real det = gxx * gyy - gxy * gxy;
                        const real disc = std::sqrt(std::max<real>(0, tr * tr - 4 * det));
                        const real lmin = 0.5 * (tr - disc) / npix;
                        eig[i] = lmin;
                        if (lmin < params.min_eig || det <= 1e-14) continue;
                        const real du = (gyy * bx - gxy * by) / det;
                        const real dv = (gxx * by - gxy * bx) / det;
                        if (std::isfinite(du) && std::isfinite(dv)) {
                            flow.u[i] += std::clamp<real>(du, -2.0, 2.0);
                            flow.v[i] += std::clamp<real>(dv, -2.0, 2.0);
                        }
                    }
                median_filter(flow);
            }
        }
        return flow;
    };

    auto residual = [&](const FlowField& flow, const std::vector<real>& eig) {
        const Gray& ga = pyr_a.front();
        const Gray& gb = pyr_b.front();
        real err = 0;
        int n = 0;
        for (int y = r; y < ga.h - r; ++y)
            for (int x = r; x < ga.w - r; ++x) {
                const size_t i = flow.idx(y, x);
                if (eig[i] < params.min_eig) continue;
                err += std::fabs(gb.sample(y + flow.v[i], x + flow.u[i]) - ga.at(y, x));
                ++n;
            }
        return n ? err / n : 1e300;
    };

    std::vector<real> eig_plain;
    FlowField best = run(0, 0, eig_plain);
    std::vector<real> eig_best = eig_plain;

    if (params.global_init) {
        // Integer-shift alignment over the central region; only worth trying
        // when it clearly beats staying put.
        const Gray& ga = pyr_a.front();
        const Gray& gb = pyr_b.front();
        const int x0 = ga.w / 4, x1 = 3 * ga.w / 4;
        const int y0 = ga.h / 4, y1 = 3 * ga.h / 4;
        real best_ssd = 1e300, ssd_zero = 1e300;
        int bu = 0, bv = 0;
        const int ru = std::min(params.global_range_u, ga.w / 2 - 1);
        const int rv = std::min(params.global_range_v, ga.h / 2 - 1);
        for (int v = -rv; v <= rv; ++v)
            for (int u = -ru; u <= ru; ++u) {
                real ssd = 0;
                int n = 0;
                for (int y = y0; y < y1; y += 2)
                    for (int x = x0; x < x1; x += 2) {
                        const int sx = x + u, sy = y + v;
                        if (sx < 0 || sx >= gb.w || sy < 0 || sy >= gb.h) continue;
                        const real d = ga.at(y, x) - gb.at(sy, sx);
                        ssd += d * d;
                        ++n;
                    }
                if (n < 16) continue;
                ssd /= n;
                if (u == 0 && v == 0) ssd_zero = ssd;
                ssd *= 1.0 + 0.004 * (std::abs(u) + std::abs(v));
                if (ssd < best_ssd) {
                    best_ssd = ssd;
                    bu = u;
                    bv = v;
                }
            }
        if ((bu != 0 || bv != 0) && best_ssd < 0.7 * ssd_zero) {
            const real scale_down = real(1 << (levels - 1));
            std::vector<real> eig_seeded;
            FlowField seeded = run(bu / scale_down, bv / scale_down, eig_seeded);
            if (residual(seeded, eig_seeded) < residual(best, eig_plain)) {
                best = std::move(seeded);
                eig_best = std::move(eig_seeded);
            }
        }
    }

    for (int y = 0; y < best.h; ++y)
        for (int x = 0; x < best.w; ++x) {
            const size_t i = best.idx(y, x);
            const bool border = x < r || y < r || x >= best.w - r || y >= best.h - r;
            best.valid[i] = !border && eig_best[i] >= params.min_eig;
        }
    return best;
}

Image flow_to_color(const FlowField& f, real max_mag) {
    EGO_CHECK(max_mag > 0, "flow_to_color: max_mag must be positive");
    Image img(f.h, f.w, 3);
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) {
            const size_t i = f.idx(y, x);
            real s = 0, h6 = 0;
            if (f.valid[i]) {
                const real mag = std::hypot(f.u[i], f.v[i]);
                s = std::min<real>(mag / max_mag, 1.0);
                real a = std::atan2(f.v[i], f.u[i]);
                if (a < 0) a += 2 * M_PI;
                h6 = a * 3.0 / M_PI;  // [0, 6)
            }
            const real c = s;  // value = 1
            const real xx = c * (1.0 - std::fabs(std::fmod(h6, 2.0) - 1.0));
            real r = 0, g = 0, b = 0;
            switch (int(h6) % 6) {
                case 0: r = c; g = xx; break;
                case 1: r = xx; g = c; break;
                case 2: g = c; b = xx; break;
                case 3: g = xx; b = c; break;
                case 4: r = xx; b = c; break;
                default: r = c; b = xx; break;
            }
            const real m = 1.0 - c;
            img.at(y, x, 0) = r + m;
            img.at(y, x, 1) = g + m;
            img.at(y, x, 2) = b + m;
        }
    return img;
}

FlowField color_to_flow(const Image& img, real max_mag) {
    EGO_CHECK(img.c == 3, "color_to_flow: need an rgb image");
    EGO_CHECK(max_mag > 0, "color_to_flow: max_mag must be positive");
    FlowField f(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const size_t i = f.idx(y, x);
            const real r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            const real mx = std::max({r, g, b}), mn = std::min({r, g, b});
            const real c = mx - mn;
            if (c < 1e-9 || mx <= 1e-9) continue;  // achromatic: zero flow
            real h6;
            if (mx == r)
                h6 = std::fmod((g - b) / c + 6.0, 6.0);
            else if (mx == g)
                h6 = (b - r) / c + 2.0;
            else
                h6 = (r - g) / c + 4.0;
            const real mag = (c / mx) * max_mag;
            const real a = h6 * M_PI / 3.0;
            f.u[i] = mag * std::cos(a);
            f.v[i] = mag * std::sin(a);
        }
    return f;
}

void write_flow_file(const std::string& path, const FlowField& f) {
    f.check_finite();
    std::ofstream out(path, std::ios::binary);
    EGO_CHECK(out.good(), "cannot open for write: %s", path.c_str());
    const uint32_t hw[2] = {uint32_t(f.h), uint32_t(f.w)};
    out.write(reinterpret_cast<const char*>(hw), 8);
    auto write_plane = [&](auto get) {
        std::vector<float> plane(f.size());
        for (size_t i = 0; i < f.size(); ++i) plane[i] = float(get(i));
        out.write(reinterpret_cast<const char*>(plane.data()), std::streamsize(plane.size() * 4));
    };
    write_plane([&](size_t i) { return f.u[i]; });
    write_plane([&](size_t i) { return f.v[i]; });
    write_plane([&](size_t i) { return real(f.valid[i]); });
    EGO_CHECK(out.good(), "write failed: %s", path.c_str());
}

FlowField read_flow_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    EGO_CHECK(in.good(), "flow file missing: %s", path.c_str());
    const size_t total = size_t(in.tellg());
    in.seekg(0);
    uint32_t hw[2];
    EGO_CHECK(total >= 8, "flow file truncated: %s", path.c_str());
    in.read(reinterpret_cast<char*>(hw), 8);
    FlowField f{int(hw[0]), int(hw[1])};
    const size_t n = f.size();
    EGO_CHECK(total == 8 + 3 * n * 4, "flow file truncated or corrupt: %s (expected %zu bytes, got %zu)",
              path.c_str(), 8 + 3 * n * 4, total);
    std::vector<float> plane(n);
    auto read_plane = [&](auto set) {
        in.read(reinterpret_cast<char*>(plane.data()), std::streamsize(n * 4));
        EGO_CHECK(in.good(), "flow file read failed: %s", path.c_str());
        for (size_t i = 0; i < n; ++i) set(i, real(plane[i]));
    };
    read_plane([&](size_t i, real v) { f.u[i] = v; });
    read_plane([&](size_t i, real v) { f.v[i] = v; });
    read_plane([&](size_t i, real v) { f.valid[i] = v > 0.5 ? 1 : 0; });
    return f;
}

}  // namespace egohome::flow
