#pragma once

#include <string>
#include <vector>

#include "egohome/core/image.hpp"

namespace egohome {

// Minimal rasterizer for the report's success-rate figures: grouped bars per
// task with a legend, labels in a built-in 5x7 font.
struct BarChart {
    std::string title;
    std::vector<std::string> group_labels;   // x axis (tasks)
    std::vector<std::string> series_names;   // legend (methods)
    std::vector<std::vector<real>> values;   // [series][group], in [0,1]
    real y_max = 1.0;
};

Image render_bar_chart(const BarChart& chart, int width = 640, int height = 360);

// Exposed for reuse in other simple figures.
void draw_text(Image& img, int x, int y, const std::string& text, const std::array<real, 3>& color,
               int scale = 1);

}  // namespace egohome
