#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egohome/core/grid.hpp"
#include "egohome/core/image.hpp"

namespace egohome {

// --- PNG (8-bit) ------------------------------------------------------------

// Writes c==1 as grayscale, c==3 as RGB. Values clamped to [0,1] and rounded
// to 8 bits. Fixed libpng settings so identical inputs give identical bytes.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);
std::string encode_png(const Image& img);  // in-memory PNG bytes

std::string base64_encode(const std::string& bytes);

// --- Raw little-endian array files -------------------------------------------
// Layout: magic (4 bytes), uint32 H, uint32 W, then payload planes.

void write_raw_f64(const std::string& path, const Grid2D<real>& g);       // magic "EHF8"
Grid2D<real> read_raw_f64(const std::string& path);
void write_raw_i32(const std::string& path, const Grid2D<int32_t>& g);    // magic "EHI4"
Grid2D<int32_t> read_raw_i32(const std::string& path);

// --- Misc --------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Fixed-format float used everywhere text determinism matters.
std::string fmt_real(real v);

}  // namespace egohome
