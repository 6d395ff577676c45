#pragma once

#include <cmath>
#include <span>

#include "freqrand/error.hpp"
#include "freqrand/freq.hpp"
#include "freqrand/model.hpp"
#include "freqrand/spectrum_mask.hpp"

// Dynamic identification of domain-invariant channels: rank the 192
// (color, band) channels of a scored reference batch by entropy-weighted
// activation and keep the top-p fraction.
namespace freqrand::masks {

// s_i = sum_b (-A_i^b * E^b) where E^b is the prediction entropy of sample
// b and A^b is the per-sample-normalized mean absolute standardized input
// channel magnitude (the activation as the network sees it).
inline BandScore score_bands(const model::ClassifierState& state,
                             std::span<const FcSet* const> batch) {
    if (batch.empty()) throw StructuralError("score_bands: empty batch");
    if (!state.normalizer.fitted()) throw StructuralError("score_bands: normalizer not fitted");
    BandScore scores{};
    for (const FcSet* fcs : batch) {
        const auto pred = model::forward_one(state, *fcs);
        const double entropy = pred.entropy;

        std::array<double, kSpatialChannels> activation{};
        double total = 0.0;
        for (int c = 0; c < kColorChannels; ++c) {
            for (int band = 0; band < kBandCount; ++band) {
                const int idx = MultiChannelImage::channel_index(c, band);
                const auto& basis = freq::band_basis_block(band);
                const double mu = state.normalizer.mean[idx];
                const double inv_sd = 1.0 / state.normalizer.stddev[idx];
                double acc = 0.0;
                for (double coeff : fcs->band(c, band)) {
                    for (int p = 0; p < 64; ++p) acc += std::abs(coeff * basis[p] - mu);
                }
                const double a = acc * inv_sd / (static_cast<double>(fcs->n_blocks()) * 64.0);
                if (!std::isfinite(a)) throw NumericError("score_bands: non-finite activation");
                activation[idx] = a;
                total += a;
            }
        }
        if (total <= 0.0) {
            activation.fill(1.0 / kSpatialChannels);
        } else {
            for (auto& a : activation) a /= total;
        }
        for (int i = 0; i < kSpatialChannels; ++i) scores[i] += -activation[i] * entropy;
    }
    return scores;
}

// Rank-and-select on a freshly scored reference batch.
inline SpectrumMask192 spectrum_learning(const model::ClassifierState& state,
                                         std::span<const FcSet* const> batch, double p) {
    return rank_select(score_bands(state, batch), p);
}

} // namespace freqrand::masks
