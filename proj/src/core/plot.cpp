#include "egohome/core/plot.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace egohome {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used.
const std::map<char, std::array<uint8_t, 7>>& font() {
    static const std::map<char, std::array<uint8_t, 7>> f = {
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1E, 0x01, 0x01, 0x0E, 0x01, 0x01, 0x1E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
        {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    return f;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, const std::array<real, 3>& c) {
    for (int y = std::max(0, y0); y < std::min(img.h, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(img.w, x1); ++x)
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[size_t(ch)];
}

const std::array<real, 3> kSeriesColors[6] = {
    {0.17, 0.45, 0.76}, {0.85, 0.45, 0.10}, {0.20, 0.62, 0.30},
    {0.72, 0.20, 0.25}, {0.48, 0.32, 0.62}, {0.45, 0.45, 0.45},
};

}  // namespace

void draw_text(Image& img, int x, int y, const std::string& text, const std::array<real, 3>& color,
               int scale) {
    int cx = x;
    for (char raw : text) {
        const char c = char(std::toupper(static_cast<unsigned char>(raw)));
        auto it = font().find(c);
        if (it != font().end()) {
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (it->second[size_t(row)] & (1 << (4 - col)))
                        fill_rect(img, cx + col * scale, y + row * scale, cx + (col + 1) * scale,
                                  y + (row + 1) * scale, color);
        }
        cx += 6 * scale;
    }
}

Image render_bar_chart(const BarChart& chart, int width, int height) {
    Image img(height, width, 3);
    fill_rect(img, 0, 0, width, height, {1, 1, 1});
    const std::array<real, 3> axis{0.15, 0.15, 0.15};

    draw_text(img, 8, 6, chart.title, axis, 1);

    const int legend_h = 12 * int(chart.series_names.size());
    const int top = 22, bottom = height - 24, left = 46, right = width - 10 - 150;
    fill_rect(img, left - 1, top, left, bottom, axis);
    fill_rect(img, left, bottom, right, bottom + 1, axis);

    // y ticks at 0, .5, 1.
    for (real tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const int y = bottom - int((bottom - top) * tick / chart.y_max);
        fill_rect(img, left - 4, y, left, y + 1, axis);
        draw_text(img, 8, y - 3, strf("%.2f", tick * chart.y_max), axis, 1);
    }

    const size_t groups = chart.group_labels.size();
    const size_t series = chart.series_names.size();
    if (groups && series) {
        const real group_w = real(right - left) / real(groups);
        const real bar_w = std::max<real>(2.0, group_w / real(series + 1));
        for (size_t g = 0; g < groups; ++g) {
            for (size_t s = 0; s < series; ++s) {
                const real v = std::clamp<real>(chart.values[s][g] / chart.y_max, 0.0, 1.0);
                const int x0 = left + int(group_w * g + bar_w * (s + 0.5));
                const int y0 = bottom - int((bottom - top) * v);
                fill_rect(img, x0, y0, x0 + int(bar_w * 0.9), bottom, kSeriesColors[s % 6]);
            }
            draw_text(img, left + int(group_w * g + group_w / 2) - 3 * int(chart.group_labels[g].size()),
                      bottom + 6, chart.group_labels[g], axis, 1);
        }
    }

    // Legend.
    int ly = top;
    (void)legend_h;
    for (size_t s = 0; s < series; ++s) {
        fill_rect(img, right + 8, ly, right + 20, ly + 8, kSeriesColors[s % 6]);
        draw_text(img, right + 24, ly, chart.series_names[s], axis, 1);
        ly += 12;
    }
    return img;
}

}  // namespace egohome
