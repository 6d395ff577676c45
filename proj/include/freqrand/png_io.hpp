#pragma once

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "freqrand/error.hpp"
#include "freqrand/image.hpp"

namespace freqrand::data {

struct LoadedPng {
    Image image;          // reflect-padded to multiples of 8
    int original_height;  // pre-padding size, for cropping on save
    int original_width;
};

namespace detail {

inline int pad_to_block(int n) {
    const int r = n % kBlockSize;
    return r == 0 ? n : n + (kBlockSize - r);
}

// Reflect index into [0, n): 0 1 2 ... n-1 n-2 n-3 ...
inline int reflect_index(int i, int n) {
    if (i < n) return i;
    const int r = 2 * n - 2 - i;
    return r < 0 ? 0 : r;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace detail

// Decode an 8-bit RGB(A)/gray PNG into [0,1] doubles, replicating gray to
// three channels and reflect-padding to block-aligned dimensions.
inline LoadedPng load_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open PNG for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed reading " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed reading " + path);
    }
    std::vector<png_byte> interleaved;
    int w = 0, h = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));

    // Normalize every input flavor to 8-bit RGB.
    png_set_expand(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    const auto color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode produced unexpected channel count: " + path);
    }

    interleaved.resize(static_cast<std::size_t>(w) * h * 3);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = interleaved.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    LoadedPng out{Image(detail::pad_to_block(h), detail::pad_to_block(w)), h, w};
    for (int y = 0; y < out.image.height; ++y) {
        const int sy = detail::reflect_index(y, h);
        for (int x = 0; x < out.image.width; ++x) {
            const int sx = detail::reflect_index(x, w);
            const png_byte* px = interleaved.data() + (static_cast<std::size_t>(sy) * w + sx) * 3;
            for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = px[c] / 255.0;
        }
    }
    return out;
}

// Encode to 8-bit RGB with round-half-up quantization. Nonzero crop
// dimensions trim the padding added by load_png.
inline void save_png(const Image& img, const std::string& path, int crop_height = 0,
                     int crop_width = 0) {
    const int h = crop_height > 0 ? crop_height : img.height;
    const int w = crop_width > 0 ? crop_width : img.width;
    if (h > img.height || w > img.width) {
        throw StructuralError("save_png: crop size exceeds image size");
    }
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open PNG for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed writing " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace freqrand::data
