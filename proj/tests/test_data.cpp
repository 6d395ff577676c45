#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <set>

#include "freqrand/png_io.hpp"
#include "freqrand/rng.hpp"
#include "freqrand/toy.hpp"
#include "test_helpers.hpp"

using namespace freqrand;
using namespace freqrand::data;

TEST_CASE("PNG round trip stays within the 8-bit quantization bound", "[data]") {
    testutil::TempDir dir("freqrand-png");
    RandomSource rng(1);
    const auto img = testutil::random_image(rng, 32, 40);
    const auto path = (dir.path / "rt.png").string();
    save_png(img, path);
    const auto loaded = load_png(path);
    REQUIRE(loaded.image.height == 32);
    REQUIRE(loaded.image.width == 40);
    CHECK(loaded.original_height == 32);
    CHECK(testutil::max_abs_diff(loaded.image, img) <= 1.0 / 255.0);

    SECTION("saving again reproduces the file byte for byte") {
        const auto path2 = (dir.path / "rt2.png").string();
        save_png(loaded.image, path2);
        std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
        const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
        const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
        CHECK(bytes_a == bytes_b);
    }
}

TEST_CASE("odd-sized PNGs are reflect-padded and cropped back", "[data]") {
    testutil::TempDir dir("freqrand-pad");
    RandomSource rng(2);
    const auto big = testutil::random_image(rng, 72, 72);
    const auto odd_path = (dir.path / "odd.png").string();
    save_png(big, odd_path, 65, 65);

    const auto loaded = load_png(odd_path);
    CHECK(loaded.original_height == 65);
    CHECK(loaded.original_width == 65);
    CHECK(loaded.image.height == 72);
    CHECK(loaded.image.width == 72);
    // padding reflects the interior rather than repeating the edge
    for (int c = 0; c < 3; ++c)
        for (int x = 0; x < 65; ++x)
            CHECK(loaded.image.at(c, 65, x) == loaded.image.at(c, 63, x));

    const auto back_path = (dir.path / "back.png").string();
    save_png(loaded.image, back_path, loaded.original_height, loaded.original_width);
    const auto again = load_png(back_path);
    CHECK(again.original_height == 65);
    CHECK(again.original_width == 65);
}

TEST_CASE("toy spec validation", "[data]") {
    ToyDomainSpec spec;
    CHECK_NOTHROW(spec.validate());

    SECTION("overlapping band sets rejected") {
        spec.style_bands.push_back(10); // 10 is a structure band
        CHECK_THROWS_AS(spec.validate(), StructuralError);
    }
    SECTION("empty band set rejected") {
        spec.structure_bands.clear();
        CHECK_THROWS_AS(spec.validate(), StructuralError);
    }
    SECTION("JSON mirror round trips") {
        spec.image_size = 32;
        spec.target_style.high_sigma = 0.004;
        const auto j = to_json(spec);
        const auto back = toy_spec_from_json(j);
        CHECK(back.image_size == 32);
        CHECK(back.target_style.high_sigma == 0.004);
        CHECK(back.structure_bands == spec.structure_bands);
    }
}

TEST_CASE("toy generation is deterministic and in range", "[data]") {
    ToyDomainSpec spec;
    spec.train_samples = 8;
    spec.source_val_samples = 4;
    spec.target_val_samples = 8;

    const auto a = generate_toy(spec, 77);
    const auto b = generate_toy(spec, 77);
    REQUIRE(a.source_train.size() == 8);
    REQUIRE(a.target_val.size() == 8);
    for (std::size_t i = 0; i < a.source_train.size(); ++i) {
        for (int c = 0; c < 3; ++c)
            CHECK(a.source_train.samples[i].image.channel[c] ==
                  b.source_train.samples[i].image.channel[c]);
        CHECK(a.source_train.samples[i].label == b.source_train.samples[i].label);
    }
    const auto c2 = generate_toy(spec, 78);
    CHECK_FALSE(a.source_train.samples[0].image.channel[0] ==
                c2.source_train.samples[0].image.channel[0]);

    // labels are balanced over 1..C and pixels stay inside [0,1]
    std::set<int> labels;
    for (const auto& s : a.source_train.samples) {
        labels.insert(s.label);
        for (int c = 0; c < 3; ++c)
            for (double v : s.image.channel[c]) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
    }
    CHECK(labels == std::set<int>{1, 2, 3, 4});
}

TEST_CASE("class structure lives exclusively in the structure bands", "[data]") {
    ToyDomainSpec spec;
    spec.train_samples = 4;
    spec.source_val_samples = 4;
    spec.target_val_samples = 4;
    // switch off every style source: all energy outside the structure bands
    // is the shared flat base
    spec.source_style = DomainStyleParams{{0, 0, 0}, 0.0, 0.0, 0.0, 0.0};
    spec.target_style = spec.source_style;

    const auto splits = generate_toy(spec, 5);
    const std::set<int> structure(spec.structure_bands.begin(), spec.structure_bands.end());
    for (const auto& s : splits.source_train.samples) {
        const auto fcs = freq::band_pass_decompose(s.image);
        for (int c = 0; c < 3; ++c) {
            for (int band = 0; band < kBandCount; ++band) {
                if (structure.count(band)) continue;
                for (double v : fcs.band(c, band)) {
                    if (band == 0) {
                        CHECK(v == Catch::Approx(4.0).margin(1e-9)); // flat 0.5 base
                    } else {
                        CHECK(std::abs(v) < 1e-9);
                    }
                }
            }
        }
    }
}

TEST_CASE("planted shift audit separates style from structure", "[data]") {
    ToyDomainSpec spec;
    spec.train_samples = 96;
    spec.source_val_samples = 4;
    spec.target_val_samples = 96;
    const auto splits = generate_toy(spec, 11);
    const auto audit = audit_planted_shift(splits.source_train, splits.target_val, spec);
    INFO("structure p=" << audit.structure_p_value << " dc p=" << audit.dc_shift_p_value
                        << " ratio=" << audit.zero_mean_style_ratio
                        << " expected=" << audit.expected_style_ratio);
    CHECK(audit.structure_p_value > 0.01);
    CHECK(audit.dc_shift_p_value < 1e-6);
    CHECK(std::abs(audit.zero_mean_style_ratio - audit.expected_style_ratio) <=
          0.15 * audit.expected_style_ratio);
    CHECK(audit.passed);
}

TEST_CASE("zero style amplitude makes the domains indistinguishable", "[data]") {
    ToyDomainSpec spec;
    spec.train_samples = 64;
    spec.source_val_samples = 4;
    spec.target_val_samples = 64;
    spec.source_style = DomainStyleParams{{0, 0, 0}, 0.01, 0.02, 0.02, 0.001};
    spec.target_style = spec.source_style;
    const auto splits = generate_toy(spec, 13);
    const auto audit = audit_planted_shift(splits.source_train, splits.target_val, spec);
    CHECK(audit.expected_style_ratio == Catch::Approx(1.0));
    CHECK(audit.zero_mean_style_ratio == Catch::Approx(1.0).margin(0.1));
    CHECK(audit.structure_p_value > 0.01);
}

TEST_CASE("dataset manifest round trip", "[data]") {
    testutil::TempDir dir("freqrand-ds");
    ToyDomainSpec spec;
    spec.image_size = 16;
    spec.train_samples = 6;
    spec.source_val_samples = 2;
    spec.target_val_samples = 4;
    spec.structure_amp = 0.15;
    const auto splits = generate_toy(spec, 3);
    save_dataset(splits, dir.str());

    const auto train = load_split(dir.str(), "source_train");
    const auto tval = load_split(dir.str(), "target_val");
    REQUIRE(train.size() == 6);
    REQUIRE(tval.size() == 4);
    CHECK(train.samples[0].domain == Domain::source);
    CHECK(tval.samples[0].domain == Domain::target);
    for (std::size_t i = 0; i < train.size(); ++i) {
        CHECK(train.samples[i].label == splits.source_train.samples[i].label);
        CHECK(testutil::max_abs_diff(train.samples[i].image,
                                     splits.source_train.samples[i].image) <= 1.0 / 255.0);
    }
}

TEST_CASE("reference pool sampling", "[data]") {
    ToyDomainSpec spec;
    spec.train_samples = 4;
    spec.source_val_samples = 2;
    spec.target_val_samples = 6;
    const auto splits = generate_toy(spec, 21);

    SECTION("single-image pool always returns that image") {
        const auto pool = ReferencePool::from_dataset(splits.target_val, 1);
        RandomSource rng(1);
        for (int i = 0; i < 5; ++i) {
            const auto img = sample_reference(pool, rng, 64, 64);
            CHECK(img.channel[0] == splits.target_val.samples[0].image.channel[0]);
        }
    }
    SECTION("seeded draws are reproducible") {
        const auto pool = ReferencePool::from_dataset(splits.target_val, 6);
        RandomSource a(9), b(9);
        for (int i = 0; i < 10; ++i) {
            const auto ia = sample_reference(pool, a, 64, 64);
            const auto ib = sample_reference(pool, b, 64, 64);
            CHECK(ia.channel[0] == ib.channel[0]);
        }
    }
    SECTION("resizing to the requested shape") {
        const auto pool = ReferencePool::from_dataset(splits.target_val, 2);
        RandomSource rng(3);
        const auto img = sample_reference(pool, rng, 32, 48);
        CHECK(img.height == 32);
        CHECK(img.width == 48);
    }
    SECTION("empty pool is a configuration error") {
        ReferencePool pool;
        RandomSource rng(4);
        CHECK_THROWS_AS(sample_reference(pool, rng, 64, 64), ConfigError);
    }
}
