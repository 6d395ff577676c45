#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "freqrand/rng.hpp"
#include "freqrand/spectrum_mask.hpp"
#include "test_helpers.hpp"

using namespace freqrand;
using namespace freqrand::masks;

TEST_CASE("accuracy_fn is the indicator of equality", "[masks]") {
    CHECK(accuracy_fn(3, 3) == 1.0);
    CHECK(accuracy_fn(3, 4) == 0.0);
    CHECK_THROWS_AS(accuracy_fn(0, 1), StructuralError);

    // mean over a batch is the fraction correct
    const int preds[] = {1, 2, 2, 4};
    const int truth[] = {1, 2, 3, 4};
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += accuracy_fn(preds[i], truth[i]);
    CHECK(s / 4.0 == 0.75);
}

TEST_CASE("rank_select keeps the top-p channels", "[masks]") {
    SECTION("top-1 of a toy score vector") {
        BandScore scores{};
        scores[0] = 3.0;
        scores[1] = 1.0;
        scores[2] = 2.0;
        // p chosen so round(p*192) == 1
        const auto mask = rank_select(scores, 1.0 / 192.0);
        CHECK(mask.popcount() == 1);
        CHECK(mask.bits[0] == 1);
    }
    SECTION("endpoints") {
        BandScore scores{};
        CHECK(rank_select(scores, 0.0).popcount() == 0);
        CHECK(rank_select(scores, 1.0).popcount() == kSpatialChannels);
    }
    SECTION("equal scores break ties toward lower indices") {
        BandScore scores{};
        scores.fill(5.0);
        const auto mask = rank_select(scores, 0.5);
        CHECK(mask.popcount() == 96);
        for (int i = 0; i < 96; ++i) CHECK(mask.bits[i] == 1);
        for (int i = 96; i < 192; ++i) CHECK(mask.bits[i] == 0);
    }
    SECTION("popcount is round(p*192) for arbitrary scores and p") {
        RandomSource rng(8);
        for (int trial = 0; trial < 50; ++trial) {
            BandScore scores;
            for (auto& s : scores) s = rng.normal();
            const double p = rng.canonical();
            const auto mask = rank_select(scores, p);
            CHECK(mask.popcount() == static_cast<int>(std::lround(p * 192)));
            CHECK(mask.p_used == p);
        }
    }
    SECTION("invariant under strictly increasing transforms") {
        RandomSource rng(9);
        BandScore scores;
        for (auto& s : scores) s = rng.normal();
        BandScore scaled, exp_scores;
        for (int i = 0; i < kSpatialChannels; ++i) {
            scaled[i] = 2.5 * scores[i];
            exp_scores[i] = std::exp(scores[i]);
        }
        const auto a = rank_select(scores, 0.3);
        CHECK(rank_select(scaled, 0.3).bits == a.bits);
        CHECK(rank_select(exp_scores, 0.3).bits == a.bits);
    }
    SECTION("rejects out-of-range p and non-finite scores") {
        BandScore scores{};
        CHECK_THROWS_AS(rank_select(scores, -0.1), StructuralError);
        CHECK_THROWS_AS(rank_select(scores, 1.1), StructuralError);
        scores[7] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(rank_select(scores, 0.5), NumericError);
    }
}

TEST_CASE("mask JSON round trip", "[masks]") {
    testutil::TempDir dir("freqrand-masks");

    SECTION("64-wide") {
        SpectrumMask64 m = SpectrumMask64::all_ones();
        m.bits[0] = m.bits[63] = 0;
        m.provenance = Provenance::analysis;
        m.created_from = "deadbeef";
        const auto path = (dir.path / "mask64.json").string();
        save_mask(m, path);
        const auto loaded = load_mask(path);
        REQUIRE(std::holds_alternative<SpectrumMask64>(loaded));
        const auto& back = std::get<SpectrumMask64>(loaded);
        CHECK(back.bits == m.bits);
        CHECK(back.provenance == Provenance::analysis);
        CHECK(back.created_from == "deadbeef");
    }
    SECTION("192-wide with p_used") {
        RandomSource rng(5);
        BandScore scores;
        for (auto& s : scores) s = rng.normal();
        auto m = rank_select(scores, 0.5);
        m.created_from = "cafe";
        const auto path = (dir.path / "mask192.json").string();
        save_mask(m, path);
        const auto loaded = load_mask(path);
        REQUIRE(std::holds_alternative<SpectrumMask192>(loaded));
        const auto& back = std::get<SpectrumMask192>(loaded);
        CHECK(back.bits == m.bits);
        CHECK(back.p_used == 0.5);
        CHECK(back.provenance == Provenance::learned);
    }
    SECTION("malformed documents are rejected") {
        CHECK_THROWS_AS(mask_from_json(nlohmann::json{{"width", 64}}), StructuralError);
        CHECK_THROWS_AS(
            mask_from_json(nlohmann::json{{"width", 32}, {"bits", std::vector<int>(32, 1)}}),
            StructuralError);
        CHECK_THROWS_AS(
            mask_from_json(nlohmann::json{{"width", 64}, {"bits", std::vector<int>(64, 2)}}),
            StructuralError);
        CHECK_THROWS_AS(load_mask((std::filesystem::temp_directory_path() / "nope.json").string()),
                        IoError);
    }
}
