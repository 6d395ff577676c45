#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "freqrand/randomize.hpp"
#include "freqrand/rng.hpp"
#include "freqrand/stats.hpp"
#include "test_helpers.hpp"

using namespace freqrand;

namespace {
masks::SpectrumMask64 random_mask64(RandomSource& rng, double keep_prob) {
    masks::SpectrumMask64 m;
    for (auto& b : m.bits) b = rng.canonical() < keep_prob ? 1 : 0;
    if (m.is_all_zeros()) m.bits[rng.uniform_index(64)] = 1;
    return m;
}

masks::SpectrumMask192 random_mask192(RandomSource& rng, double keep_prob) {
    masks::SpectrumMask192 m;
    for (auto& b : m.bits) b = rng.canonical() < keep_prob ? 1 : 0;
    if (m.is_all_zeros()) m.bits[rng.uniform_index(192)] = 1;
    return m;
}
} // namespace

TEST_CASE("all-ones mask is the exact identity", "[randomize]") {
    RandomSource rng(1);
    const auto src = testutil::random_image(rng);
    const auto ref = testutil::random_image(rng);
    const auto out = randomize::randomize_sa(src, ref, masks::SpectrumMask64::all_ones());
    CHECK(out.clamp_rate == 0.0);
    for (int c = 0; c < 3; ++c) CHECK(out.image.channel[c] == src.channel[c]);

    const auto out192 = randomize::randomize_sl(src, ref, masks::SpectrumMask192::all_ones());
    for (int c = 0; c < 3; ++c) CHECK(out192.image.channel[c] == src.channel[c]);
}

TEST_CASE("self-reference randomization stays within a bin width per coefficient", "[randomize]") {
    RandomSource rng(2);
    const auto src = testutil::random_image(rng);
    masks::SpectrumMask64 mask = masks::SpectrumMask64::all_ones();
    for (int b : {0, 1, 40, 41, 62, 63}) mask.bits[b] = 0;

    const auto bands = randomize::randomize_sa_bands(src, src, mask);
    const auto orig = freq::band_pass_decompose(src);
    for (int c = 0; c < 3; ++c) {
        for (int band = 0; band < kBandCount; ++band) {
            const auto a = orig.band(c, band);
            const auto b = bands.band(c, band);
            if (mask.bits[band]) {
                REQUIRE(std::equal(a.begin(), a.end(), b.begin()));
            } else {
                const auto cdf = histmatch::build_cdf(a, histmatch::kDefaultBins);
                for (std::size_t i = 0; i < a.size(); ++i)
                    REQUIRE(std::abs(a[i] - b[i]) <= cdf.bin_width() + 1e-12);
            }
        }
    }
}

TEST_CASE("invariant bands survive bit-identically for any reference", "[randomize]") {
    RandomSource rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const auto src = testutil::random_image(rng, 32, 32);
        const auto ref = testutil::random_image(rng, 32, 32);
        const auto mask = random_mask64(rng, 0.5);
        const auto bands = randomize::randomize_sa_bands(src, ref, mask);
        const auto orig = freq::band_pass_decompose(src);
        for (int c = 0; c < 3; ++c)
            for (int band = 0; band < kBandCount; ++band)
                if (mask.bits[band]) {
                    const auto a = orig.band(c, band);
                    const auto b = bands.band(c, band);
                    REQUIRE(std::equal(a.begin(), a.end(), b.begin()));
                }
    }
}

TEST_CASE("192-wide masks act per channel", "[randomize]") {
    RandomSource rng(4);
    const auto src = testutil::random_image(rng, 32, 32);
    const auto ref = testutil::random_image(rng, 32, 32);

    // vary only red-channel bands; green and blue stay untouched
    masks::SpectrumMask192 mask = masks::SpectrumMask192::all_ones();
    for (int band = 0; band < kBandCount; ++band) mask.bits[0 * kBandCount + band] = band % 2;

    const auto bands = randomize::randomize_sl_bands(src, ref, mask);
    const auto orig = freq::band_pass_decompose(src);
    for (int c = 1; c < 3; ++c) CHECK(bands.coeff[c] == orig.coeff[c]);
    CHECK_FALSE(bands.coeff[0] == orig.coeff[0]);
}

TEST_CASE("randomization reduces KS distance on every matched band", "[randomize]") {
    RandomSource rng(5);
    const auto src = testutil::random_image(rng);
    Image ref(src.height, src.width);
    // a reference with a very different distribution: smooth vertical ramp
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ref.height; ++y)
            for (int x = 0; x < ref.width; ++x)
                ref.at(c, y, x) = 0.1 + 0.8 * y / (ref.height - 1.0);

    const auto mask = random_mask192(rng, 0.5);
    const auto bands = randomize::randomize_sl_bands(src, ref, mask);
    const auto sfc = freq::band_pass_decompose(src);
    const auto rfc = freq::band_pass_decompose(ref);
    for (int c = 0; c < 3; ++c) {
        for (int band = 0; band < kBandCount; ++band) {
            if (mask.bits[c * kBandCount + band]) continue;
            const double before = stats::ks_statistic(sfc.band(c, band), rfc.band(c, band));
            const double after = stats::ks_statistic(bands.band(c, band), rfc.band(c, band));
            REQUIRE(after <= before + 1e-12);
        }
    }
}

TEST_CASE("all-zero masks need the explicit override", "[randomize]") {
    RandomSource rng(6);
    const auto src = testutil::random_image(rng, 16, 16);
    const auto ref = testutil::random_image(rng, 16, 16);
    CHECK_THROWS_AS(randomize::randomize_sa(src, ref, masks::SpectrumMask64::all_zeros()),
                    StructuralError);
    CHECK_THROWS_AS(randomize::randomize_sl(src, ref, masks::SpectrumMask192::all_zeros()),
                    StructuralError);
    CHECK_NOTHROW(randomize::randomize_sa(src, ref, masks::SpectrumMask64::all_zeros(),
                                          histmatch::kDefaultBins, true));
}

TEST_CASE("shape mismatch is a structural error", "[randomize]") {
    RandomSource rng(7);
    const auto src = testutil::random_image(rng, 16, 16);
    const auto ref = testutil::random_image(rng, 32, 32);
    CHECK_THROWS_AS(randomize::randomize_sa(src, ref, masks::SpectrumMask64::all_ones()),
                    StructuralError);
    CHECK_THROWS_AS(randomize::randomize_sa(src, ref, random_mask64(rng, 0.5)), StructuralError);
}

TEST_CASE("reconstruct_full clamps and reports the clamp rate", "[randomize]") {
    RandomSource rng(8);
    const auto src = testutil::random_image(rng, 16, 16);
    const auto fcs = freq::band_pass_decompose(src);

    SECTION("unrandomized decomposition reconstructs the image, clamp is a no-op") {
        const auto rec = randomize::reconstruct_full(fcs);
        CHECK(rec.clamp_rate == 0.0);
        CHECK(testutil::max_abs_diff(rec.image, src) < 1e-6);
    }
    SECTION("pushing the DC band out of range engages the clamp") {
        FcSet shifted = fcs;
        for (int c = 0; c < 3; ++c)
            for (auto& v : shifted.band(c, 0)) v += 10.0; // DC +1.25 in pixel space
        const auto rec = randomize::reconstruct_full(shifted);
        CHECK(rec.clamp_rate > 0.5);
        for (int c = 0; c < 3; ++c)
            for (double v : rec.image.channel[c]) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
    }
}

TEST_CASE("randomization is deterministic in its inputs", "[randomize]") {
    RandomSource rng(9);
    const auto src = testutil::random_image(rng, 32, 32);
    const auto ref = testutil::random_image(rng, 32, 32);
    const auto mask = random_mask192(rng, 0.4);
    const auto a = randomize::randomize_sl(src, ref, mask);
    const auto b = randomize::randomize_sl(src, ref, mask);
    for (int c = 0; c < 3; ++c) CHECK(a.image.channel[c] == b.image.channel[c]);
    CHECK(a.clamp_rate == b.clamp_rate);
}
