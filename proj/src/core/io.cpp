#include "egohome/core/io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>

namespace egohome {

namespace {

struct PngWriteCtx {
    std::vector<unsigned char> bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
    ctx->bytes.insert(ctx->bytes.end(), data, data + len);
}

void png_flush_cb(png_structp) {}

void write_bytes(const std::string& path, const void* data, size_t n) {
    std::ofstream out(path, std::ios::binary);
    EGO_CHECK(out.good(), "cannot open for write: %s", path.c_str());
    out.write(static_cast<const char*>(data), std::streamsize(n));
    EGO_CHECK(out.good(), "write failed: %s", path.c_str());
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    EGO_CHECK(in.good(), "cannot open: %s", path.c_str());
    const size_t n = size_t(in.tellg());
    in.seekg(0);
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    EGO_CHECK(in.good(), "read failed: %s", path.c_str());
    return bytes;
}

}  // namespace

std::string encode_png(const Image& img) {
    EGO_CHECK(img.c == 1 || img.c == 3, "encode_png: %d channels unsupported", img.c);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    EGO_CHECK(png, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    PngWriteCtx ctx;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng write error");
    }
    png_set_write_fn(png, &ctx, png_write_cb, png_flush_cb);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, img.w, img.h, 8,
                 img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(size_t(img.w) * img.c);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                real v = std::clamp<real>(img.at(y, x, ch), 0.0, 1.0);
                row[size_t(x) * img.c + ch] = (unsigned char)std::lround(v * 255.0);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return std::string(ctx.bytes.begin(), ctx.bytes.end());
}

void write_png(const std::string& path, const Image& img) {
    const std::string bytes = encode_png(img);
    write_bytes(path, bytes.data(), bytes.size());
}

std::string base64_encode(const std::string& bytes) {
    static const char* tab = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (size_t i = 0; i < bytes.size(); i += 3) {
        uint32_t v = uint32_t(uint8_t(bytes[i])) << 16;
        if (i + 1 < bytes.size()) v |= uint32_t(uint8_t(bytes[i + 1])) << 8;
        if (i + 2 < bytes.size()) v |= uint32_t(uint8_t(bytes[i + 2]));
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? tab[(v >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? tab[v & 63] : '=';
    }
    return out;
}

namespace {

struct PngReadCtx {
    const unsigned char* data;
    size_t size;
    size_t pos;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + len > ctx->size) png_error(png, "truncated png");
    std::memcpy(out, ctx->data + ctx->pos, len);
    ctx->pos += len;
}

}  // namespace

Image read_png(const std::string& path) {
    auto bytes = read_bytes(path);
    EGO_CHECK(bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0, "not a PNG file: %s", path.c_str());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    EGO_CHECK(png, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng read error: " + path);
    }
    PngReadCtx ctx{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &ctx, png_read_cb);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    const int c = int(png_get_channels(png, info));
    EGO_CHECK(c == 1 || c == 3, "read_png: %d channels unsupported: %s", c, path.c_str());

    Image img(h, w, c);
    std::vector<unsigned char> row(size_t(w) * c);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) img.at(y, x, ch) = real(row[size_t(x) * c + ch]) / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

namespace {

template <typename T>
void write_raw(const std::string& path, const char magic[4], int w, int h, const std::vector<T>& payload) {
    std::string buf;
    buf.reserve(12 + payload.size() * sizeof(T));
    buf.append(magic, 4);
    const uint32_t hw[2] = {uint32_t(h), uint32_t(w)};
    buf.append(reinterpret_cast<const char*>(hw), 8);
    buf.append(reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(T));
    write_bytes(path, buf.data(), buf.size());
}

template <typename T>
std::vector<T> read_raw(const std::string& path, const char magic[4], int& w, int& h) {
    auto bytes = read_bytes(path);
    EGO_CHECK(bytes.size() >= 12 && std::memcmp(bytes.data(), magic, 4) == 0,
              "bad header in raw file: %s", path.c_str());
    uint32_t hw[2];
    std::memcpy(hw, bytes.data() + 4, 8);
    h = int(hw[0]);
    w = int(hw[1]);
    const size_t n = size_t(w) * h;
    EGO_CHECK(bytes.size() == 12 + n * sizeof(T), "truncated raw file: %s", path.c_str());
    std::vector<T> out(n);
    std::memcpy(out.data(), bytes.data() + 12, n * sizeof(T));
    return out;
}

}  // namespace

void write_raw_f64(const std::string& path, const Grid2D<real>& g) {
    write_raw(path, "EHF8", g.w, g.h, g.cells);
}

Grid2D<real> read_raw_f64(const std::string& path) {
    Grid2D<real> g;
    g.cells = read_raw<real>(path, "EHF8", g.w, g.h);
    return g;
}

void write_raw_i32(const std::string& path, const Grid2D<int32_t>& g) {
    write_raw(path, "EHI4", g.w, g.h, g.cells);
}

Grid2D<int32_t> read_raw_i32(const std::string& path) {
    Grid2D<int32_t> g;
    g.cells = read_raw<int32_t>(path, "EHI4", g.w, g.h);
    return g;
}

void write_text_file(const std::string& path, const std::string& text) {
    write_bytes(path, text.data(), text.size());
}

std::string read_text_file(const std::string& path) {
    auto bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

std::string fmt_real(real v) { return strf("%.12g", v); }

}  // namespace egohome
