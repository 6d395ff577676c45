#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "freqrand/error.hpp"
#include "freqrand/freq.hpp"
#include "freqrand/spectrum_mask.hpp"

// Empirical CDFs over equal-width histograms and CDF-based histogram
// matching of band coefficient distributions.
namespace freqrand::histmatch {

inline constexpr int kDefaultBins = 256;

struct EmpiricalCdf {
    std::vector<double> bin_edges;   // n_bins + 1, strictly increasing
    std::vector<double> cumulative;  // n_bins, non-decreasing, last == 1
    double sample_min = 0.0;
    double sample_max = 0.0;
    bool degenerate = false;         // all samples equal

    double bin_width() const {
        return degenerate ? 0.0 : bin_edges[1] - bin_edges[0];
    }

    // Piecewise-linear CDF: 0 at the left edge, cumulative[k] at edge k+1.
    double cdf(double x) const {
        if (degenerate) return x < sample_min ? 0.0 : 1.0;
        if (x <= bin_edges.front()) return 0.0;
        if (x >= bin_edges.back()) return 1.0;
        const double w = bin_width();
        int k = static_cast<int>((x - bin_edges.front()) / w);
        k = std::clamp(k, 0, static_cast<int>(cumulative.size()) - 1);
        const double lo = k == 0 ? 0.0 : cumulative[k - 1];
        const double t = (x - bin_edges[k]) / w;
        return lo + (cumulative[k] - lo) * t;
    }

    // Piecewise-linear inverse. Zero-mass bins collapse to their right edge.
    double inverse(double q) const {
        if (degenerate) return sample_min;
        q = std::clamp(q, 0.0, 1.0);
        if (q <= 0.0) return bin_edges.front();
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), q);
        const int k = static_cast<int>(it - cumulative.begin());
        const double lo = k == 0 ? 0.0 : cumulative[k - 1];
        const double hi = cumulative[k];
        if (hi <= lo) return bin_edges[k + 1];
        const double t = (q - lo) / (hi - lo);
        return bin_edges[k] + t * (bin_edges[k + 1] - bin_edges[k]);
    }
};

// Histogram over [min, max] of the samples with n_bins equal-width bins,
// cumulative sums normalized to end at 1.
inline EmpiricalCdf build_cdf(std::span<const double> samples, int n_bins) {
    if (samples.empty()) throw StructuralError("build_cdf: empty sample set");
    if (n_bins < 1) throw StructuralError("build_cdf: n_bins must be >= 1");
    EmpiricalCdf out;
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    out.sample_min = *lo_it;
    out.sample_max = *hi_it;
    if (!std::isfinite(out.sample_min) || !std::isfinite(out.sample_max)) {
        throw NumericError("build_cdf: non-finite sample");
    }
    if (out.sample_min == out.sample_max) {
        out.degenerate = true;
        out.bin_edges = {out.sample_min, out.sample_min};
        out.cumulative = {1.0};
        return out;
    }
    const double width = (out.sample_max - out.sample_min) / n_bins;
    out.bin_edges.resize(n_bins + 1);
    for (int k = 0; k <= n_bins; ++k) out.bin_edges[k] = out.sample_min + k * width;
    out.bin_edges.back() = out.sample_max; // guard against rounding drift

    // Right-inclusive bins, (edge_k, edge_{k+1}]: a sample sitting exactly on
    // an interior edge counts into the bin to its left, so that the
    // interpolated CDF at a sample's position includes its own mass.
    std::vector<double> counts(n_bins, 0.0);
    for (double x : samples) {
        int k = static_cast<int>(std::ceil((x - out.sample_min) / width)) - 1;
        k = std::clamp(k, 0, n_bins - 1);
        counts[k] += 1.0;
    }
    out.cumulative.resize(n_bins);
    double acc = 0.0;
    for (int k = 0; k < n_bins; ++k) {
        acc += counts[k];
        out.cumulative[k] = acc / static_cast<double>(samples.size());
    }
    out.cumulative.back() = 1.0;
    return out;
}

// Monotone remap T = inverse-CDF(reference) o CDF(source) applied to every
// source value. Degenerate reference: everything maps to its constant.
// Degenerate source: everything maps to the reference median.
inline std::vector<double> match_values(std::span<const double> source,
                                        std::span<const double> reference,
                                        int n_bins = kDefaultBins) {
    const EmpiricalCdf src = build_cdf(source, n_bins);
    const EmpiricalCdf ref = build_cdf(reference, n_bins);
    std::vector<double> out(source.size());
    if (ref.degenerate) {
        std::fill(out.begin(), out.end(), ref.sample_min);
        return out;
    }
    if (src.degenerate) {
        std::fill(out.begin(), out.end(), ref.inverse(0.5));
        return out;
    }
    for (std::size_t i = 0; i < source.size(); ++i) {
        out[i] = ref.inverse(src.cdf(source[i]));
    }
    return out;
}

namespace detail {
inline bool channel_band_variant(const masks::SpectrumMask64& m, int /*c*/, int band) {
    return m.bits[band] == 0;
}
inline bool channel_band_variant(const masks::SpectrumMask192& m, int c, int band) {
    return m.bits[c * kBandCount + band] == 0;
}
} // namespace detail

// Match the coefficient histogram of every domain-variant (mask bit 0)
// band of `source` to the corresponding band of `reference`. Invariant
// bands are copied bit-identically. Each (channel, band) pair is matched
// independently.
template <typename MaskT>
FcSet match_fc(const FcSet& source, const FcSet& reference, const MaskT& mask,
               int n_bins = kDefaultBins) {
    if (!source.same_shape(reference)) {
        throw StructuralError("match_fc: source and reference shapes differ "
                              "(resize the reference first)");
    }
    FcSet out = source;
    for (int c = 0; c < kColorChannels; ++c) {
        for (int band = 0; band < kBandCount; ++band) {
            if (!detail::channel_band_variant(mask, c, band)) continue;
            const auto matched = match_values(source.band(c, band), reference.band(c, band), n_bins);
            auto dst = out.band(c, band);
            std::copy(matched.begin(), matched.end(), dst.begin());
        }
    }
    return out;
}

} // namespace freqrand::histmatch
