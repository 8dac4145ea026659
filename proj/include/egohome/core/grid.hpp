#pragma once

#include <vector>

#include "egohome/core/common.hpp"

namespace egohome {

template <typename T>
struct Grid2D {
    int w = 0, h = 0;
    std::vector<T> cells;

    Grid2D() = default;
    Grid2D(int width, int height, T fill = T{}) : w(width), h(height), cells(size_t(width) * height, fill) {}

    bool in_bounds(int x, int y) const { return x >= 0 && x < w && y >= 0 && y < h; }
    T& at(int x, int y) { return cells[size_t(y) * w + x]; }
    const T& at(int x, int y) const { return cells[size_t(y) * w + x]; }

    bool operator==(const Grid2D&) const = default;
};

}  // namespace egohome
