#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "freqrand/model.hpp"
#include "freqrand/rng.hpp"
#include "freqrand/toy.hpp"
#include "test_helpers.hpp"

using namespace freqrand;
using namespace freqrand::model;

namespace {

// Reference forward pass: materialize the 192 spatial channels, standardize
// them, and convolve directly. Slow but written straight from the layer
// definitions, independent of the factored path.
std::vector<double> naive_logits(const ClassifierState& st, const FcSet& input) {
    const auto mci = freq::to_spatial(input);
    const int H = mci.height, W = mci.width;
    const int brows = H / 8, bcols = W / 8, nb = brows * bcols;
    const int k1 = st.config.conv1_channels, k2 = st.config.conv2_channels;
    const auto& w1 = st.params[kConv1W].values;
    const auto& b1 = st.params[kConv1B].values;

    std::vector<double> h1(static_cast<std::size_t>(k1) * nb);
    for (int oc = 0; oc < k1; ++oc) {
        for (int by = 0; by < brows; ++by) {
            for (int bx = 0; bx < bcols; ++bx) {
                double s = b1[oc];
                for (int ic = 0; ic < kSpatialChannels; ++ic) {
                    const auto chan = mci.channel(ic);
                    const double mu = st.normalizer.mean[ic];
                    const double sd = st.normalizer.stddev[ic];
                    const double* wp = w1.data() + (static_cast<std::size_t>(oc) * kSpatialChannels + ic) * 64;
                    for (int dy = 0; dy < 8; ++dy)
                        for (int dx = 0; dx < 8; ++dx)
                            s += wp[dy * 8 + dx] *
                                 ((chan[(by * 8 + dy) * W + bx * 8 + dx] - mu) / sd);
                }
                h1[static_cast<std::size_t>(oc) * nb + by * bcols + bx] = std::tanh(s);
            }
        }
    }
    const auto& w2 = st.params[kConv2W].values;
    const auto& b2 = st.params[kConv2B].values;
    std::vector<double> h2(static_cast<std::size_t>(k2) * nb);
    for (int oc = 0; oc < k2; ++oc) {
        for (int y = 0; y < brows; ++y) {
            for (int x = 0; x < bcols; ++x) {
                double s = b2[oc];
                for (int ic = 0; ic < k1; ++ic)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int yy = y + dy, xx = x + dx;
                            if (yy < 0 || yy >= brows || xx < 0 || xx >= bcols) continue;
                            s += w2[(static_cast<std::size_t>(oc) * k1 + ic) * 9 + (dy + 1) * 3 + dx + 1] *
                                 h1[static_cast<std::size_t>(ic) * nb + yy * bcols + xx];
                        }
                h2[static_cast<std::size_t>(oc) * nb + y * bcols + x] = std::tanh(s);
            }
        }
    }
    std::vector<double> gap(k2, 0.0);
    for (int oc = 0; oc < k2; ++oc) {
        for (int blk = 0; blk < nb; ++blk) gap[oc] += h2[static_cast<std::size_t>(oc) * nb + blk];
        gap[oc] /= nb;
    }
    std::vector<double> logits(st.config.n_classes);
    for (int k = 0; k < st.config.n_classes; ++k) {
        double s = st.params[kFcB].values[k];
        for (int oc = 0; oc < k2; ++oc)
            s += st.params[kFcW].values[static_cast<std::size_t>(k) * k2 + oc] * gap[oc];
        logits[k] = s;
    }
    return logits;
}

struct Fixture {
    ModelConfig config;
    ClassifierState state;
    std::vector<FcSet> inputs;
    std::vector<const FcSet*> ptrs;
    std::vector<int> labels;

    explicit Fixture(int k1 = 3, int k2 = 4, int C = 4, int n = 3, int size = 16,
                     std::uint64_t seed = 5) {
        config.conv1_channels = k1;
        config.conv2_channels = k2;
        config.n_classes = C;
        RandomSource rng(seed);
        for (int i = 0; i < n; ++i) {
            inputs.push_back(freq::band_pass_decompose(testutil::random_image(rng, size, size)));
            labels.push_back(1 + static_cast<int>(rng.uniform_index(C)));
        }
        state = init_classifier(config, seed + 1);
        for (const auto& in : inputs) ptrs.push_back(&in);
        state.normalizer = fit_normalizer(ptrs);
    }
};

} // namespace

TEST_CASE("softmax predictions are a probability distribution", "[model]") {
    Fixture fx;
    const auto preds = forward(fx.state, fx.ptrs);
    REQUIRE(preds.size() == fx.inputs.size());
    for (const auto& p : preds) {
        const double sum = std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0);
        CHECK(std::abs(sum - 1.0) < 1e-9);
        for (double v : p.probabilities) CHECK(v >= 0.0);
        CHECK(p.entropy >= 0.0);
        CHECK(p.entropy <= std::log(fx.config.n_classes) + 1e-12);
    }
}

TEST_CASE("uniform logits give ln C entropy and 0.5 probabilities for C=2", "[model]") {
    const auto p = Prediction::from_logits({0.0, 0.0});
    CHECK(p.probabilities[0] == Catch::Approx(0.5));
    CHECK(p.probabilities[1] == Catch::Approx(0.5));
    CHECK(p.entropy == Catch::Approx(std::log(2.0)));
}

TEST_CASE("fresh models predict near-uniform distributions", "[model]") {
    // pilot-backed bound: over 100 seeds the fresh-state entropy stayed
    // within 0.2 nats of ln C
    RandomSource rng(31);
    ModelConfig config;
    const double lnC = std::log(4.0);
    for (int seed = 0; seed < 100; ++seed) {
        const auto input = freq::band_pass_decompose(testutil::random_image(rng, 16, 16));
        auto st = init_classifier(config, seed);
        const FcSet* p = &input;
        st.normalizer = fit_normalizer(std::span<const FcSet* const>(&p, 1));
        const auto pred = forward_one(st, input);
        REQUIRE(lnC - pred.entropy < 0.2);
    }
}

TEST_CASE("duplicated samples produce identical rows", "[model]") {
    Fixture fx;
    std::vector<const FcSet*> batch{&fx.inputs[0], &fx.inputs[1], &fx.inputs[0]};
    const auto preds = forward(fx.state, batch);
    CHECK(preds[0].logits == preds[2].logits);
    CHECK_FALSE(preds[0].logits == preds[1].logits);
}

TEST_CASE("factored forward equals the naive spatial convolution", "[model]") {
    Fixture fx(3, 4, 4, 2, 24, 17);
    const auto preds = forward(fx.state, fx.ptrs);
    for (std::size_t i = 0; i < fx.inputs.size(); ++i) {
        const auto ref = naive_logits(fx.state, fx.inputs[i]);
        for (int k = 0; k < fx.config.n_classes; ++k)
            REQUIRE(std::abs(preds[i].logits[k] - ref[k]) < 1e-9);
    }
}

TEST_CASE("spatial-input overload agrees with the coefficient path", "[model]") {
    Fixture fx;
    std::vector<MultiChannelImage> spatial;
    for (const auto& in : fx.inputs) spatial.push_back(freq::to_spatial(in));
    const auto a = forward(fx.state, fx.ptrs);
    const auto b = forward(fx.state, std::span<const MultiChannelImage>(spatial));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < fx.config.n_classes; ++k)
            REQUIRE(std::abs(a[i].logits[k] - b[i].logits[k]) < 1e-9);
}

TEST_CASE("cross-entropy basics", "[model]") {
    SECTION("perfect one-hot prediction costs nothing") {
        const auto p = Prediction::from_logits({100.0, 0.0, 0.0, 0.0});
        const int label = 1;
        CHECK(cross_entropy(std::span(&p, 1), std::span(&label, 1)) ==
              Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("uniform prediction costs ln C") {
        const auto p = Prediction::from_logits({0.0, 0.0, 0.0, 0.0});
        const int label = 3;
        CHECK(cross_entropy(std::span(&p, 1), std::span(&label, 1)) ==
              Catch::Approx(std::log(4.0)));
    }
    SECTION("batch loss is the mean of per-sample losses") {
        const Prediction preds[2] = {Prediction::from_logits({2.0, 0.0}),
                                     Prediction::from_logits({0.0, 1.0})};
        const int labels[2] = {1, 2};
        const int l0 = 1, l1 = 2;
        const double a = cross_entropy(std::span(&preds[0], 1), std::span(&l0, 1));
        const double b = cross_entropy(std::span(&preds[1], 1), std::span(&l1, 1));
        CHECK(cross_entropy(preds, labels) == Catch::Approx((a + b) / 2.0));
    }
    SECTION("labels outside 1..C are rejected") {
        const auto p = Prediction::from_logits({0.0, 0.0});
        const int bad = 3;
        CHECK_THROWS_AS(cross_entropy(std::span(&p, 1), std::span(&bad, 1)), StructuralError);
    }
}

TEST_CASE("analytic gradients match central finite differences", "[model]") {
    Fixture fx(2, 3, 3, 2, 16, 23);
    auto& st = fx.state;
    const auto grads = backward(st, fx.ptrs, fx.labels);

    const double eps = 1e-4;
    RandomSource pick(3);
    for (std::size_t ti = 0; ti < st.params.size(); ++ti) {
        auto& tensor = st.params[ti];
        // sample a deterministic subset per tensor; the acceptance suite
        // sweeps every scalar
        const std::size_t n_checks = std::min<std::size_t>(tensor.size(), 40);
        for (std::size_t chk = 0; chk < n_checks; ++chk) {
            const std::size_t i =
                tensor.size() <= 40 ? chk : pick.uniform_index(tensor.size());
            const double saved = tensor.values[i];
            tensor.values[i] = saved + eps;
            const auto up = forward(st, fx.ptrs);
            const double lu = cross_entropy(up, fx.labels);
            tensor.values[i] = saved - eps;
            const auto dn = forward(st, fx.ptrs);
            const double ld = cross_entropy(dn, fx.labels);
            tensor.values[i] = saved;
            const double fd = (lu - ld) / (2.0 * eps);
            const double an = grads.tensors[ti].values[i];
            REQUIRE(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("backward losses and degenerate gradients", "[model]") {
    Fixture fx;
    SECTION("backward loss equals forward cross-entropy") {
        const auto grads = backward(fx.state, fx.ptrs, fx.labels);
        const auto preds = forward(fx.state, fx.ptrs);
        CHECK(grads.loss == Catch::Approx(cross_entropy(preds, fx.labels)).epsilon(1e-12));
    }
    SECTION("saturated perfect prediction zeroes the head gradient") {
        // drive the fc bias for the true class sky-high: softmax == one-hot
        auto st = fx.state;
        const int label = 2;
        st.params[kFcB].values[label - 1] = 60.0;
        std::vector<const FcSet*> one{fx.ptrs[0]};
        const int labels[1] = {label};
        const auto grads = backward(st, one, labels);
        for (double v : grads.tensors[kFcW].values) CHECK(std::abs(v) < 1e-20);
        for (double v : grads.tensors[kFcB].values) CHECK(std::abs(v) < 1e-20);
    }
    SECTION("duplicating the batch leaves the mean gradient unchanged") {
        const auto g1 = backward(fx.state, fx.ptrs, fx.labels);
        std::vector<const FcSet*> doubled = fx.ptrs;
        doubled.insert(doubled.end(), fx.ptrs.begin(), fx.ptrs.end());
        std::vector<int> labels2 = fx.labels;
        labels2.insert(labels2.end(), fx.labels.begin(), fx.labels.end());
        const auto g2 = backward(fx.state, doubled, labels2);
        for (std::size_t ti = 0; ti < g1.tensors.size(); ++ti)
            for (std::size_t i = 0; i < g1.tensors[ti].size(); ++i)
                REQUIRE(std::abs(g1.tensors[ti].values[i] - g2.tensors[ti].values[i]) < 1e-12);
    }
}

TEST_CASE("optimizer mechanics", "[model]") {
    Fixture fx;
    auto st = fx.state;
    st.optimizer.lr_base = 1e-2;
    st.optimizer.lr_step_size = 3;
    st.optimizer.lr_gamma = 0.1;

    SECTION("zero gradients only advance the step counter") {
        Gradients zeros;
        for (const auto& t : st.params) zeros.tensors.push_back(Tensor::zeros_like(t));
        const auto before = st.params;
        optimizer_step(st, zeros);
        CHECK(st.step == 1);
        for (std::size_t ti = 0; ti < before.size(); ++ti)
            CHECK(st.params[ti].values == before[ti].values);
    }
    SECTION("learning rate decays by gamma every step_size steps") {
        CHECK(current_lr(st.optimizer, 0) == Catch::Approx(1e-2));
        CHECK(current_lr(st.optimizer, 2) == Catch::Approx(1e-2));
        CHECK(current_lr(st.optimizer, 3) == Catch::Approx(1e-3));
        CHECK(current_lr(st.optimizer, 6) == Catch::Approx(1e-4));
    }
    SECTION("two steps with a fixed gradient follow the closed-form recurrence") {
        const double g = 0.37;
        Gradients grads;
        for (const auto& t : st.params) grads.tensors.push_back(Tensor::zeros_like(t));
        grads.tensors[kFcB].values[0] = g;
        const double theta0 = st.params[kFcB].values[0];
        const auto& opt = st.optimizer;

        optimizer_step(st, grads);
        // t=1: mhat = g, vhat = g^2 exactly after bias correction
        const double expect1 = theta0 - opt.lr_base * g / (std::abs(g) + opt.epsilon);
        REQUIRE(st.params[kFcB].values[0] == Catch::Approx(expect1).epsilon(1e-12));

        optimizer_step(st, grads);
        const double m2 = (opt.beta1 * (1 - opt.beta1) * g + (1 - opt.beta1) * g) /
                          (1 - opt.beta1 * opt.beta1);
        const double v2 = (opt.beta2 * (1 - opt.beta2) * g * g + (1 - opt.beta2) * g * g) /
                          (1 - opt.beta2 * opt.beta2);
        const double expect2 = expect1 - opt.lr_base * m2 / (std::sqrt(v2) + opt.epsilon);
        REQUIRE(st.params[kFcB].values[0] == Catch::Approx(expect2).epsilon(1e-12));
        CHECK(st.step == 2);
    }
}

TEST_CASE("training separates a linearly separable toy set", "[model]") {
    // class = sign of the band-5 coefficient field; pilot run froze the
    // step budget at 150 (loss drops below 0.1 in well under half that)
    RandomSource rng(71);
    ModelConfig config;
    config.conv1_channels = 4;
    config.conv2_channels = 4;
    config.n_classes = 2;
    std::vector<FcSet> inputs;
    std::vector<int> labels;
    for (int i = 0; i < 32; ++i) {
        FcSet fcs(16, 16);
        const int label = 1 + (i % 2);
        const double sign = label == 1 ? 1.0 : -1.0;
        for (int c = 0; c < 3; ++c) {
            for (auto& v : fcs.band(c, 0)) v = 4.0 + 0.2 * rng.normal();
            for (auto& v : fcs.band(c, 5)) v = sign * 0.8 + 0.2 * rng.normal();
            for (auto& v : fcs.band(c, 20)) v = 0.3 * rng.normal();
        }
        inputs.push_back(std::move(fcs));
        labels.push_back(label);
    }
    std::vector<const FcSet*> ptrs;
    for (const auto& in : inputs) ptrs.push_back(&in);

    OptimizerConfig opt;
    opt.lr_base = 3e-2;
    opt.lr_step_size = 1000000;
    auto st = init_classifier(config, 7, opt);
    st.normalizer = fit_normalizer(ptrs);

    double loss = 1e9;
    int steps = 0;
    for (; steps < 150 && loss > 0.1; ++steps) {
        auto grads = backward(st, ptrs, labels);
        loss = grads.loss;
        optimizer_step(st, grads);
    }
    INFO("steps used: " << steps);
    REQUIRE(loss < 0.1);
}

TEST_CASE("identical seed and data give bitwise-identical trajectories", "[model]") {
    auto run = [] {
        Fixture fx(3, 3, 4, 4, 16, 77);
        auto st = fx.state;
        st.optimizer.lr_base = 1e-2;
        for (int i = 0; i < 5; ++i) {
            const auto grads = backward(st, fx.ptrs, fx.labels);
            optimizer_step(st, grads);
        }
        return st;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t ti = 0; ti < a.params.size(); ++ti)
        CHECK(a.params[ti].values == b.params[ti].values);
}

TEST_CASE("parameter count is stable and reported", "[model]") {
    ModelConfig config;
    const auto a = init_classifier(config, 1);
    const auto b = init_classifier(config, 99);
    CHECK(a.parameter_count() == b.parameter_count());
    // 8x192x64 + 8 + 8x8x9 + 8 + 4x8 + 4
    CHECK(a.parameter_count() == 98932);
}

TEST_CASE("checkpoints round trip exactly", "[model]") {
    testutil::TempDir dir("freqrand-ckpt");
    Fixture fx;
    auto st = fx.state;
    st.optimizer.lr_base = 1e-2;
    for (int i = 0; i < 2; ++i) optimizer_step(st, backward(st, fx.ptrs, fx.labels));

    const auto path = (dir.path / "model.json").string();
    save_checkpoint(st, path, "abc123");
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.config_hash == "abc123");
    CHECK(loaded.state.step == st.step);
    for (std::size_t ti = 0; ti < st.params.size(); ++ti) {
        CHECK(loaded.state.params[ti].values == st.params[ti].values);
        CHECK(loaded.state.adam_m[ti].values == st.adam_m[ti].values);
        CHECK(loaded.state.adam_v[ti].values == st.adam_v[ti].values);
    }
    CHECK(loaded.state.normalizer.mean == st.normalizer.mean);

    // the restored state predicts identically
    const auto pa = forward(st, fx.ptrs);
    const auto pb = forward(loaded.state, fx.ptrs);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].logits == pb[i].logits);
}

TEST_CASE("structural errors on bad inputs", "[model]") {
    Fixture fx;
    SECTION("empty batch") {
        std::vector<const FcSet*> empty;
        CHECK_THROWS_AS(forward(fx.state, empty), StructuralError);
    }
    SECTION("label out of range") {
        std::vector<int> bad = fx.labels;
        bad[0] = 99;
        CHECK_THROWS_AS(backward(fx.state, fx.ptrs, bad), StructuralError);
    }
    SECTION("unfitted normalizer") {
        auto st = init_classifier(fx.config, 3);
        CHECK_THROWS_AS(forward(st, fx.ptrs), StructuralError);
    }
    SECTION("bad model config") {
        ModelConfig config;
        config.input_channels = 3;
        CHECK_THROWS_AS(config.validate(), StructuralError);
    }
}
