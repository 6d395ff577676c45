#pragma once

#include <algorithm>
#include <utility>

#include "freqrand/freq.hpp"
#include "freqrand/histmatch.hpp"
#include "freqrand/image.hpp"
#include "freqrand/spectrum_mask.hpp"

// The frequency-space randomization operators: histogram-match the
// domain-variant bands of a source image against a reference image while
// keeping domain-invariant bands untouched, then reconstruct.
namespace freqrand::randomize {

struct Reconstruction {
    Image image;            // clamped to [0,1]
    double clamp_rate = 0;  // fraction of pixel values the clamp moved
};

// Collapse a (possibly randomized) band decomposition back to a 3-channel
// image, clamping to [0,1]. This is the export path for interoperating
// with pipelines that expect full-spectrum RGB input.
inline Reconstruction reconstruct_full(const FcSet& fcs) {
    Reconstruction out{freq::recompose(fcs), 0.0};
    std::size_t clamped = 0;
    for (auto& chan : out.image.channel) {
        for (double& v : chan) {
            if (v < 0.0 || v > 1.0) {
                v = std::clamp(v, 0.0, 1.0);
                ++clamped;
            }
        }
    }
    out.clamp_rate = static_cast<double>(clamped) /
                     (out.image.pixels_per_channel() * kColorChannels);
    return out;
}

namespace detail {
template <typename MaskT>
FcSet randomized_bands(const Image& source, const Image& reference, const MaskT& mask,
                       int n_bins, bool allow_full_randomization) {
    if (source.height != reference.height || source.width != reference.width) {
        throw StructuralError("randomize: source and reference shapes differ "
                              "(resize the reference first)");
    }
    if (mask.is_all_zeros() && !allow_full_randomization) {
        throw StructuralError("randomize: all-zero mask would randomize the whole "
                              "spectrum; pass allow_full_randomization to override");
    }
    return histmatch::match_fc(freq::band_pass_decompose(source),
                               freq::band_pass_decompose(reference), mask, n_bins);
}
} // namespace detail

// Frequency-space randomization in band space: decompose both images and
// histogram-match the variant bands. Invariant-band coefficients are
// bit-identical to the source's.
inline FcSet randomize_sa_bands(const Image& source, const Image& reference,
                                const masks::SpectrumMask64& mask,
                                int n_bins = histmatch::kDefaultBins,
                                bool allow_full_randomization = false) {
    return detail::randomized_bands(source, reference, mask, n_bins, allow_full_randomization);
}

inline FcSet randomize_sl_bands(const Image& source, const Image& reference,
                                const masks::SpectrumMask192& mask,
                                int n_bins = histmatch::kDefaultBins,
                                bool allow_full_randomization = false) {
    return detail::randomized_bands(source, reference, mask, n_bins, allow_full_randomization);
}

namespace detail {
template <typename MaskT>
Reconstruction randomize_impl(const Image& source, const Image& reference, const MaskT& mask,
                              int n_bins, bool allow_full_randomization) {
    if (mask.is_all_ones()) {
        // No variant bands: the operator is the identity, bit for bit.
        if (source.height != reference.height || source.width != reference.width) {
            throw StructuralError("randomize: source and reference shapes differ "
                                  "(resize the reference first)");
        }
        return Reconstruction{source, 0.0};
    }
    return reconstruct_full(
        randomized_bands(source, reference, mask, n_bins, allow_full_randomization));
}
} // namespace detail

// R over a 64-wide mask: band decisions apply to all three color channels.
inline Reconstruction randomize_sa(const Image& source, const Image& reference,
                                   const masks::SpectrumMask64& mask,
                                   int n_bins = histmatch::kDefaultBins,
                                   bool allow_full_randomization = false) {
    return detail::randomize_impl(source, reference, mask, n_bins, allow_full_randomization);
}

// R over a 192-wide mask: each (channel, band) pair decided independently.
inline Reconstruction randomize_sl(const Image& source, const Image& reference,
                                   const masks::SpectrumMask192& mask,
                                   int n_bins = histmatch::kDefaultBins,
                                   bool allow_full_randomization = false) {
    return detail::randomize_impl(source, reference, mask, n_bins, allow_full_randomization);
}

} // namespace freqrand::randomize
