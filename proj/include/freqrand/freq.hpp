#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <span>

#include "freqrand/error.hpp"
#include "freqrand/image.hpp"
#include "freqrand/spectrum_mask.hpp"

// Blockwise orthonormal DCT-II transforms and the 64-band decomposition
// built on the JPEG zigzag ordering of block-local coefficients.
namespace freqrand::freq {

// Orthonormal 1D DCT-II basis: C[u][x] = a(u) cos((2x+1) u pi / 16),
// a(0) = sqrt(1/8), a(u>0) = 1/2. Rows are orthonormal, so the 2D block
// transform is coef = C * block * C^T and its inverse is C^T * coef * C.
inline const std::array<std::array<double, kBlockSize>, kBlockSize>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, kBlockSize>, kBlockSize> c{};
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < kBlockSize; ++u) {
            const double a = u == 0 ? std::sqrt(1.0 / kBlockSize) : std::sqrt(2.0 / kBlockSize);
            for (int x = 0; x < kBlockSize; ++x) {
                c[u][x] = a * std::cos((2 * x + 1) * u * pi / (2.0 * kBlockSize));
            }
        }
        return c;
    }();
    return basis;
}

// JPEG zigzag scan: band index of block-local frequency (u,v), u = row
// frequency, v = column frequency. (0,0) -> 0, (0,1) -> 1, (1,0) -> 2, ...
inline int zigzag_index(int u, int v) {
    if (u < 0 || u >= kBlockSize || v < 0 || v >= kBlockSize) {
        throw StructuralError("zigzag_index: (u,v) out of 0..7");
    }
    static const auto table = [] {
        std::array<std::array<int, kBlockSize>, kBlockSize> t{};
        int idx = 0;
        for (int d = 0; d <= 2 * (kBlockSize - 1); ++d) {
            if (d % 2 == 0) {
                // even diagonal: walk up-right
                for (int uu = std::min(d, kBlockSize - 1); uu >= 0 && d - uu < kBlockSize; --uu) {
                    t[uu][d - uu] = idx++;
                }
            } else {
                for (int vv = std::min(d, kBlockSize - 1); vv >= 0 && d - vv < kBlockSize; --vv) {
                    t[d - vv][vv] = idx++;
                }
            }
        }
        return t;
    }();
    return table[u][v];
}

// Inverse of zigzag_index: band -> (u, v).
inline std::pair<int, int> zigzag_position(int band) {
    if (band < 0 || band >= kBandCount) {
        throw StructuralError("zigzag_position: band out of 0..63");
    }
    static const auto table = [] {
        std::array<std::pair<int, int>, kBandCount> t{};
        for (int u = 0; u < kBlockSize; ++u)
            for (int v = 0; v < kBlockSize; ++v) t[zigzag_index(u, v)] = {u, v};
        return t;
    }();
    return table[band];
}

namespace detail {

// in/out are 8x8 blocks flattened row-major with row stride `stride`.
inline void forward_block(const double* in, double* out, int stride) {
    const auto& c = dct_basis();
    double tmp[kBlockSize][kBlockSize];
    // rows: tmp[y][v] = sum_x in[y][x] * c[v][x]
    for (int y = 0; y < kBlockSize; ++y) {
        for (int v = 0; v < kBlockSize; ++v) {
            double s = 0.0;
            for (int x = 0; x < kBlockSize; ++x) s += in[y * stride + x] * c[v][x];
            tmp[y][v] = s;
        }
    }
    // columns: out[u][v] = sum_y tmp[y][v] * c[u][y]
    for (int u = 0; u < kBlockSize; ++u) {
        for (int v = 0; v < kBlockSize; ++v) {
            double s = 0.0;
            for (int y = 0; y < kBlockSize; ++y) s += tmp[y][v] * c[u][y];
            out[u * stride + v] = s;
        }
    }
}

inline void inverse_block(const double* in, double* out, int stride) {
    const auto& c = dct_basis();
    double tmp[kBlockSize][kBlockSize];
    // columns: tmp[y][v] = sum_u in[u][v] * c[u][y]
    for (int y = 0; y < kBlockSize; ++y) {
        for (int v = 0; v < kBlockSize; ++v) {
            double s = 0.0;
            for (int u = 0; u < kBlockSize; ++u) s += in[u * stride + v] * c[u][y];
            tmp[y][v] = s;
        }
    }
    // rows: out[y][x] = sum_v tmp[y][v] * c[v][x]
    for (int y = 0; y < kBlockSize; ++y) {
        for (int x = 0; x < kBlockSize; ++x) {
            double s = 0.0;
            for (int v = 0; v < kBlockSize; ++v) s += tmp[y][v] * c[v][x];
            out[y * stride + x] = s;
        }
    }
}

} // namespace detail

// Orthonormal 2D DCT-II of every non-overlapping 8x8 block of each channel.
inline CoefficientGrid dct_forward(const Image& img) {
    freqrand::detail::check_block_aligned(img.height, img.width, "dct_forward");
    CoefficientGrid grid(img.height, img.width);
    for (int c = 0; c < kColorChannels; ++c) {
        for (int by = 0; by < img.height; by += kBlockSize) {
            for (int bx = 0; bx < img.width; bx += kBlockSize) {
                const double* in = img.channel[c].data() + static_cast<std::size_t>(by) * img.width + bx;
                double* out = grid.channel[c].data() + static_cast<std::size_t>(by) * img.width + bx;
                detail::forward_block(in, out, img.width);
            }
        }
    }
    return grid;
}

// Exact inverse of dct_forward up to floating point. Output is not clamped.
inline Image dct_inverse(const CoefficientGrid& grid) {
    freqrand::detail::check_block_aligned(grid.height, grid.width, "dct_inverse");
    Image img(grid.height, grid.width);
    for (int c = 0; c < kColorChannels; ++c) {
        for (int by = 0; by < grid.height; by += kBlockSize) {
            for (int bx = 0; bx < grid.width; bx += kBlockSize) {
                const double* in = grid.channel[c].data() + static_cast<std::size_t>(by) * grid.width + bx;
                double* out = img.channel[c].data() + static_cast<std::size_t>(by) * grid.width + bx;
                detail::inverse_block(in, out, grid.width);
            }
        }
    }
    return img;
}

// Scatter a coefficient grid into its 64 band planes (compact storage).
inline FcSet fcset_from_grid(const CoefficientGrid& grid) {
    FcSet fcs(grid.height, grid.width);
    const int bcols = fcs.block_cols();
    for (int c = 0; c < kColorChannels; ++c) {
        for (int by = 0; by < fcs.block_rows(); ++by) {
            for (int bx = 0; bx < bcols; ++bx) {
                const int block = by * bcols + bx;
                for (int u = 0; u < kBlockSize; ++u) {
                    for (int v = 0; v < kBlockSize; ++v) {
                        const int band = zigzag_index(u, v);
                        fcs.band(c, band)[block] =
                            grid.at(c, by * kBlockSize + u, bx * kBlockSize + v);
                    }
                }
            }
        }
    }
    return fcs;
}

// Gather the band planes back into the full coefficient grid (their sum).
inline CoefficientGrid grid_from_fcset(const FcSet& fcs) {
    CoefficientGrid grid(fcs.height, fcs.width);
    const int bcols = fcs.block_cols();
    for (int c = 0; c < kColorChannels; ++c) {
        for (int by = 0; by < fcs.block_rows(); ++by) {
            for (int bx = 0; bx < bcols; ++bx) {
                const int block = by * bcols + bx;
                for (int u = 0; u < kBlockSize; ++u) {
                    for (int v = 0; v < kBlockSize; ++v) {
                        const int band = zigzag_index(u, v);
                        grid.at(c, by * kBlockSize + u, bx * kBlockSize + v) =
                            fcs.band(c, band)[block];
                    }
                }
            }
        }
    }
    return grid;
}

// Decompose an image into its 64 frequency components per channel.
inline FcSet band_pass_decompose(const Image& img) {
    return fcset_from_grid(dct_forward(img));
}

// Materialize one band plane as a full coefficient grid (zeros elsewhere).
// Used mostly by tests and the decompose tool.
inline CoefficientGrid plane(const FcSet& fcs, int band) {
    if (band < 0 || band >= kBandCount) throw StructuralError("plane: band out of 0..63");
    CoefficientGrid grid(fcs.height, fcs.width);
    const auto [u, v] = zigzag_position(band);
    const int bcols = fcs.block_cols();
    for (int c = 0; c < kColorChannels; ++c) {
        for (int by = 0; by < fcs.block_rows(); ++by) {
            for (int bx = 0; bx < bcols; ++bx) {
                grid.at(c, by * kBlockSize + u, bx * kBlockSize + v) =
                    fcs.band(c, band)[by * bcols + bx];
            }
        }
    }
    return grid;
}

// Zero the planes whose mask bit is 0; the mask applies identically to the
// three color channels.
inline FcSet band_reject(const FcSet& fcs, const masks::SpectrumMask64& mask) {
    FcSet out = fcs;
    for (int band = 0; band < kBandCount; ++band) {
        if (mask.bits[band]) continue;
        for (int c = 0; c < kColorChannels; ++c) {
            auto span = out.band(c, band);
            std::fill(span.begin(), span.end(), 0.0);
        }
    }
    return out;
}

// Inverse DCT of the per-channel sum of planes. Not clamped.
inline Image recompose(const FcSet& fcs) {
    return dct_inverse(grid_from_fcset(fcs));
}

// 8x8 block pattern of one band: basis[y][x] = C[u][y] * C[v][x]. A plane
// with a single nonzero coefficient k in a block reconstructs to k times
// this pattern inside that block.
inline const std::array<double, kBlockSize * kBlockSize>& band_basis_block(int band) {
    static const auto blocks = [] {
        std::array<std::array<double, kBlockSize * kBlockSize>, kBandCount> all{};
        const auto& c = dct_basis();
        for (int band = 0; band < kBandCount; ++band) {
            const auto [u, v] = zigzag_position(band);
            for (int y = 0; y < kBlockSize; ++y)
                for (int x = 0; x < kBlockSize; ++x) all[band][y * kBlockSize + x] = c[u][y] * c[v][x];
        }
        return all;
    }();
    if (band < 0 || band >= kBandCount) throw StructuralError("band_basis_block: band out of 0..63");
    return blocks[band];
}

// Expand an FcSet into the 192-channel spatial representation: channel
// (c, i) is the inverse DCT of plane i of color channel c.
inline MultiChannelImage to_spatial(const FcSet& fcs) {
    MultiChannelImage out(fcs.height, fcs.width);
    const int bcols = fcs.block_cols();
    for (int c = 0; c < kColorChannels; ++c) {
        for (int band = 0; band < kBandCount; ++band) {
            const auto& basis = band_basis_block(band);
            auto chan = out.channel(MultiChannelImage::channel_index(c, band));
            const auto coeffs = fcs.band(c, band);
            for (int by = 0; by < fcs.block_rows(); ++by) {
                for (int bx = 0; bx < bcols; ++bx) {
                    const double k = coeffs[by * bcols + bx];
                    for (int y = 0; y < kBlockSize; ++y) {
                        double* row = chan.data() +
                                      static_cast<std::size_t>(by * kBlockSize + y) * fcs.width +
                                      bx * kBlockSize;
                        for (int x = 0; x < kBlockSize; ++x) row[x] += k * basis[y * kBlockSize + x];
                    }
                }
            }
        }
    }
    return out;
}

// Project a 192-channel spatial representation back onto band coefficients.
// Exact for inputs produced by to_spatial (each channel is band-pure).
inline FcSet fcset_from_spatial(const MultiChannelImage& mci) {
    FcSet fcs(mci.height, mci.width);
    const int bcols = fcs.block_cols();
    for (int c = 0; c < kColorChannels; ++c) {
        for (int band = 0; band < kBandCount; ++band) {
            const auto& basis = band_basis_block(band);
            const auto chan = mci.channel(MultiChannelImage::channel_index(c, band));
            auto coeffs = fcs.band(c, band);
            for (int by = 0; by < fcs.block_rows(); ++by) {
                for (int bx = 0; bx < bcols; ++bx) {
                    double s = 0.0;
                    for (int y = 0; y < kBlockSize; ++y) {
                        const double* row = chan.data() +
                                            static_cast<std::size_t>(by * kBlockSize + y) * fcs.width +
                                            bx * kBlockSize;
                        for (int x = 0; x < kBlockSize; ++x) s += row[x] * basis[y * kBlockSize + x];
                    }
                    coeffs[by * bcols + bx] = s;
                }
            }
        }
    }
    return fcs;
}

} // namespace freqrand::freq
