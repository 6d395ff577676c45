#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "freqrand/error.hpp"

namespace freqrand {

inline constexpr int kBlockSize = 8;
inline constexpr int kBandCount = 64;        // frequency bands per color channel
inline constexpr int kColorChannels = 3;
inline constexpr int kSpatialChannels = kColorChannels * kBandCount; // 192

namespace detail {
inline void check_block_aligned(int height, int width, const char* who) {
    if (height <= 0 || width <= 0 || height % kBlockSize != 0 || width % kBlockSize != 0) {
        throw StructuralError(std::string(who) + ": dimensions " + std::to_string(height) + "x" +
                              std::to_string(width) + " must be positive multiples of 8");
    }
}
} // namespace detail

// H x W x 3 raster, values in [0,1], row-major per channel. Dimensions are
// multiples of 8; ingest code pads before constructing one.
struct Image {
    int height = 0;
    int width = 0;
    std::array<std::vector<double>, kColorChannels> channel;

    Image() = default;
    Image(int h, int w) : height(h), width(w) {
        detail::check_block_aligned(h, w, "Image");
        for (auto& c : channel) c.assign(static_cast<std::size_t>(h) * w, 0.0);
    }

    double& at(int c, int y, int x) { return channel[c][static_cast<std::size_t>(y) * width + x]; }
    double at(int c, int y, int x) const { return channel[c][static_cast<std::size_t>(y) * width + x]; }

    std::size_t pixels_per_channel() const { return static_cast<std::size_t>(height) * width; }

    bool all_finite() const {
        for (const auto& c : channel)
            for (double v : c)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

// Same shape as Image but holding blockwise DCT-II coefficients: the
// coefficient for block-local frequency (u,v) of block (by,bx) sits at
// pixel position (by*8+u, bx*8+v).
struct CoefficientGrid {
    int height = 0;
    int width = 0;
    std::array<std::vector<double>, kColorChannels> channel;

    CoefficientGrid() = default;
    CoefficientGrid(int h, int w) : height(h), width(w) {
        detail::check_block_aligned(h, w, "CoefficientGrid");
        for (auto& c : channel) c.assign(static_cast<std::size_t>(h) * w, 0.0);
    }

    double& at(int c, int y, int x) { return channel[c][static_cast<std::size_t>(y) * width + x]; }
    double at(int c, int y, int x) const { return channel[c][static_cast<std::size_t>(y) * width + x]; }
};

// Per-channel 64-band decomposition of one image. Band planes are stored
// compactly: each band holds one coefficient per 8x8 block, in block
// raster order. Conceptually plane i of channel c is an H x W grid that is
// zero everywhere except at the block positions with zigzag index i; the
// planes of a channel are disjoint and sum to the channel's full grid.
struct FcSet {
    int height = 0;
    int width = 0;
    // coeff[c] holds kBandCount * n_blocks values, band-major.
    std::array<std::vector<double>, kColorChannels> coeff;

    FcSet() = default;
    FcSet(int h, int w) : height(h), width(w) {
        detail::check_block_aligned(h, w, "FcSet");
        for (auto& c : coeff) c.assign(static_cast<std::size_t>(kBandCount) * n_blocks(), 0.0);
    }

    int block_rows() const { return height / kBlockSize; }
    int block_cols() const { return width / kBlockSize; }
    int n_blocks() const { return block_rows() * block_cols(); }

    std::span<double> band(int c, int b) {
        return {coeff[c].data() + static_cast<std::size_t>(b) * n_blocks(),
                static_cast<std::size_t>(n_blocks())};
    }
    std::span<const double> band(int c, int b) const {
        return {coeff[c].data() + static_cast<std::size_t>(b) * n_blocks(),
                static_cast<std::size_t>(n_blocks())};
    }

    bool same_shape(const FcSet& other) const {
        return height == other.height && width == other.width;
    }
};

// 192 spatial channels (color-major, band-minor: channel index = color*64 + band),
// each the inverse DCT of one FcSet plane.
struct MultiChannelImage {
    int height = 0;
    int width = 0;
    std::vector<double> data; // kSpatialChannels * height * width

    MultiChannelImage() = default;
    MultiChannelImage(int h, int w) : height(h), width(w) {
        detail::check_block_aligned(h, w, "MultiChannelImage");
        data.assign(static_cast<std::size_t>(kSpatialChannels) * h * w, 0.0);
    }

    std::span<double> channel(int idx) {
        const std::size_t n = static_cast<std::size_t>(height) * width;
        return {data.data() + idx * n, n};
    }
    std::span<const double> channel(int idx) const {
        const std::size_t n = static_cast<std::size_t>(height) * width;
        return {data.data() + idx * n, n};
    }

    static int channel_index(int color, int band) { return color * kBandCount + band; }
};

// Bilinear resize, used to bring reference images to the source shape.
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
    detail::check_block_aligned(out_h, out_w, "resize_bilinear");
    Image out(out_h, out_w);
    const double sy = static_cast<double>(src.height) / out_h;
    const double sx = static_cast<double>(src.width) / out_w;
    for (int c = 0; c < kColorChannels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
            const int y0 = std::min(static_cast<int>(fy), src.height - 1);
            const int y1 = std::min(y0 + 1, src.height - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
                const int x0 = std::min(static_cast<int>(fx), src.width - 1);
                const int x1 = std::min(x0 + 1, src.width - 1);
                const double wx = fx - x0;
                const double top = src.at(c, y0, x0) * (1.0 - wx) + src.at(c, y0, x1) * wx;
                const double bot = src.at(c, y1, x0) * (1.0 - wx) + src.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

} // namespace freqrand
