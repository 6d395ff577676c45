#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqrand/error.hpp"
#include "freqrand/freq.hpp"
#include "freqrand/image.hpp"
#include "freqrand/rng.hpp"

// Small differentiable classifier over the 192-channel band representation:
// an 8x8 stride-8 convolution (one learned linear map per block), a 3x3
// convolution over the block grid, tanh nonlinearities, global average
// pooling and a linear head. Analytic gradients, Adam updates.
//
// Band-pure channels let the 8x8 stride-8 convolution act directly on band
// coefficients: within a block, channel (c,i) is coeff * basis_i, so the
// kernel's inner product with the standardized channel collapses to an
// effective per-(out,in) weight on the coefficient plus a constant. Forward
// and backward below use that factored form; it is numerically identical to
// convolving the materialized spatial channels (covered by tests).
namespace freqrand::model {

struct ModelConfig {
    int input_channels = kSpatialChannels;
    int conv1_channels = 8;
    int conv2_channels = 8;
    int n_classes = 4;

    void validate() const {
        if (input_channels != kSpatialChannels) {
            throw StructuralError("ModelConfig: input_channels must be 192");
        }
        if (conv1_channels < 1 || conv2_channels < 1 || n_classes < 2) {
            throw StructuralError("ModelConfig: channel and class counts must be positive");
        }
    }
};

// Adam with a step-decay learning-rate schedule. The defaults record the
// reference hyperparameters; toy-scale runs override lr_base.
struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    double lr_base = 1e-5;
    long long lr_step_size = 5000;
    double lr_gamma = 0.1;
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    static Tensor zeros_like(const Tensor& t) { return {t.name, t.shape, std::vector<double>(t.size(), 0.0)}; }
};

// Spatial-domain standardization statistics, one pair per channel,
// computed once on the source train split and frozen.
struct Normalizer {
    std::vector<double> mean;   // 192
    std::vector<double> stddev; // 192, floored at 1 for dead channels

    bool fitted() const { return mean.size() == kSpatialChannels; }
};

struct Prediction {
    std::vector<double> logits;
    std::vector<double> probabilities;
    double entropy = 0.0;    // nats
    int predicted_label = 1; // 1..C

    static Prediction from_logits(std::vector<double> logits) {
        Prediction p;
        p.logits = std::move(logits);
        const double mx = *std::max_element(p.logits.begin(), p.logits.end());
        double lse = 0.0;
        for (double z : p.logits) lse += std::exp(z - mx);
        lse = mx + std::log(lse);
        p.probabilities.resize(p.logits.size());
        p.entropy = 0.0;
        double best = -1.0;
        for (std::size_t k = 0; k < p.logits.size(); ++k) {
            const double logp = p.logits[k] - lse;
            p.probabilities[k] = std::exp(logp);
            p.entropy -= p.probabilities[k] * logp;
            if (p.probabilities[k] > best) {
                best = p.probabilities[k];
                p.predicted_label = static_cast<int>(k) + 1;
            }
        }
        if (!std::isfinite(p.entropy)) throw NumericError("Prediction: non-finite entropy");
        return p;
    }
};

struct ClassifierState {
    ModelConfig config;
    OptimizerConfig optimizer;
    std::uint64_t init_seed = 0;
    long long step = 0;
    Normalizer normalizer;
    std::vector<Tensor> params; // conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : params) n += t.size();
        return n;
    }
};

enum : std::size_t { kConv1W = 0, kConv1B, kConv2W, kConv2B, kFcW, kFcB, kParamTensors };

inline ClassifierState init_classifier(const ModelConfig& config, std::uint64_t seed,
                                       const OptimizerConfig& opt = {}) {
    config.validate();
    ClassifierState st;
    st.config = config;
    st.optimizer = opt;
    st.init_seed = seed;
    const int k1 = config.conv1_channels, k2 = config.conv2_channels, C = config.n_classes;
    st.params = {
        {"conv1_w", {k1, kSpatialChannels, kBlockSize, kBlockSize},
         std::vector<double>(static_cast<std::size_t>(k1) * kSpatialChannels * 64, 0.0)},
        {"conv1_b", {k1}, std::vector<double>(k1, 0.0)},
        {"conv2_w", {k2, k1, 3, 3}, std::vector<double>(static_cast<std::size_t>(k2) * k1 * 9, 0.0)},
        {"conv2_b", {k2}, std::vector<double>(k2, 0.0)},
        {"fc_w", {C, k2}, std::vector<double>(static_cast<std::size_t>(C) * k2, 0.0)},
        {"fc_b", {C}, std::vector<double>(C, 0.0)},
    };
    RandomSource rng(seed);
    auto glorot = [&](Tensor& t, int fan_in, int fan_out) {
        const double sd = std::sqrt(2.0 / (fan_in + fan_out));
        for (auto& v : t.values) v = sd * rng.normal();
    };
    glorot(st.params[kConv1W], kSpatialChannels * 64, config.conv1_channels);
    glorot(st.params[kConv2W], config.conv1_channels * 9, config.conv2_channels);
    glorot(st.params[kFcW], config.conv2_channels, config.n_classes);
    for (auto& t : st.params) {
        st.adam_m.push_back(Tensor::zeros_like(t));
        st.adam_v.push_back(Tensor::zeros_like(t));
    }
    return st;
}

// Per-channel mean of the basis pattern: 1/8 for the DC band, 0 otherwise;
// per-channel mean square is 1/64 (orthonormal basis).
inline Normalizer fit_normalizer(std::span<const FcSet* const> train) {
    if (train.empty()) throw StructuralError("fit_normalizer: empty training set");
    Normalizer norm;
    norm.mean.assign(kSpatialChannels, 0.0);
    norm.stddev.assign(kSpatialChannels, 0.0);
    for (int c = 0; c < kColorChannels; ++c) {
        for (int band = 0; band < kBandCount; ++band) {
            const int idx = MultiChannelImage::channel_index(c, band);
            double sum = 0.0, sum2 = 0.0;
            std::size_t n_blocks = 0;
            for (const FcSet* fcs : train) {
                for (double v : fcs->band(c, band)) {
                    sum += v;
                    sum2 += v * v;
                }
                n_blocks += fcs->n_blocks();
            }
            const double pixels = static_cast<double>(n_blocks) * 64.0;
            const double basis_sum = band == 0 ? 8.0 : 0.0;
            const double mean = sum * basis_sum / pixels;
            const double mean_sq = sum2 / pixels;
            const double var = std::max(0.0, mean_sq - mean * mean);
            norm.mean[idx] = mean;
            norm.stddev[idx] = var < 1e-18 ? 1.0 : std::sqrt(var);
        }
    }
    return norm;
}

namespace detail {

// Effective per-(out,in) coefficient weights and bias of the standardized
// stride-8 convolution: a[oc][ic] = <w, basis_ic>/sigma_ic and
// bias_eff[oc] = b[oc] - sum_ic (mu_ic/sigma_ic) * sum_p w[oc][ic][p].
struct FactoredConv1 {
    std::vector<double> a;        // k1 x 192
    std::vector<double> bias_eff; // k1
};

inline FactoredConv1 factor_conv1(const ClassifierState& st) {
    if (!st.normalizer.fitted()) throw StructuralError("model: normalizer not fitted");
    const int k1 = st.config.conv1_channels;
    const auto& w = st.params[kConv1W].values;
    const auto& b = st.params[kConv1B].values;
    FactoredConv1 f;
    f.a.assign(static_cast<std::size_t>(k1) * kSpatialChannels, 0.0);
    f.bias_eff.assign(b.begin(), b.end());
    for (int oc = 0; oc < k1; ++oc) {
        for (int ic = 0; ic < kSpatialChannels; ++ic) {
            const auto& basis = freq::band_basis_block(ic % kBandCount);
            const double* wp = w.data() + (static_cast<std::size_t>(oc) * kSpatialChannels + ic) * 64;
            double dot = 0.0, wsum = 0.0;
            for (int p = 0; p < 64; ++p) {
                dot += wp[p] * basis[p];
                wsum += wp[p];
            }
            f.a[static_cast<std::size_t>(oc) * kSpatialChannels + ic] = dot / st.normalizer.stddev[ic];
            f.bias_eff[oc] -= st.normalizer.mean[ic] / st.normalizer.stddev[ic] * wsum;
        }
    }
    return f;
}

struct ForwardCache {
    int brows = 0, bcols = 0;
    std::vector<double> h1;     // k1 x blocks, post-tanh
    std::vector<double> h2;     // k2 x blocks, post-tanh
    std::vector<double> gap;    // k2
    Prediction prediction;
};

inline ForwardCache forward_one(const ClassifierState& st, const FactoredConv1& f,
                                const FcSet& input) {
    const int k1 = st.config.conv1_channels, k2 = st.config.conv2_channels;
    const int C = st.config.n_classes;
    ForwardCache cache;
    cache.brows = input.block_rows();
    cache.bcols = input.block_cols();
    const int nb = cache.brows * cache.bcols;

    // conv1 on coefficients + tanh
    cache.h1.assign(static_cast<std::size_t>(k1) * nb, 0.0);
    for (int oc = 0; oc < k1; ++oc) {
        double* out = cache.h1.data() + static_cast<std::size_t>(oc) * nb;
        std::fill(out, out + nb, f.bias_eff[oc]);
        const double* arow = f.a.data() + static_cast<std::size_t>(oc) * kSpatialChannels;
        for (int c = 0; c < kColorChannels; ++c) {
            for (int band = 0; band < kBandCount; ++band) {
                const double aw = arow[MultiChannelImage::channel_index(c, band)];
                const auto coeffs = input.band(c, band);
                for (int blk = 0; blk < nb; ++blk) out[blk] += aw * coeffs[blk];
            }
        }
        for (int blk = 0; blk < nb; ++blk) out[blk] = std::tanh(out[blk]);
    }

    // conv2 3x3, zero padding, + tanh
    const auto& w2 = st.params[kConv2W].values;
    const auto& b2 = st.params[kConv2B].values;
    cache.h2.assign(static_cast<std::size_t>(k2) * nb, 0.0);
    for (int oc = 0; oc < k2; ++oc) {
        for (int y = 0; y < cache.brows; ++y) {
            for (int x = 0; x < cache.bcols; ++x) {
                double s = b2[oc];
                for (int ic = 0; ic < k1; ++ic) {
                    const double* hin = cache.h1.data() + static_cast<std::size_t>(ic) * nb;
                    const double* wp = w2.data() + (static_cast<std::size_t>(oc) * k1 + ic) * 9;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = y + dy;
                        if (yy < 0 || yy >= cache.brows) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= cache.bcols) continue;
                            s += wp[(dy + 1) * 3 + (dx + 1)] * hin[yy * cache.bcols + xx];
                        }
                    }
                }
                cache.h2[static_cast<std::size_t>(oc) * nb + y * cache.bcols + x] = std::tanh(s);
            }
        }
    }

    // global average pool + linear head
    cache.gap.assign(k2, 0.0);
    for (int oc = 0; oc < k2; ++oc) {
        const double* h = cache.h2.data() + static_cast<std::size_t>(oc) * nb;
        double s = 0.0;
        for (int blk = 0; blk < nb; ++blk) s += h[blk];
        cache.gap[oc] = s / nb;
    }
    const auto& fw = st.params[kFcW].values;
    const auto& fb = st.params[kFcB].values;
    std::vector<double> logits(C);
    for (int k = 0; k < C; ++k) {
        double s = fb[k];
        for (int oc = 0; oc < k2; ++oc) s += fw[static_cast<std::size_t>(k) * k2 + oc] * cache.gap[oc];
        logits[k] = s;
    }
    cache.prediction = Prediction::from_logits(std::move(logits));
    return cache;
}

} // namespace detail

inline std::vector<Prediction> forward(const ClassifierState& st,
                                       std::span<const FcSet* const> batch) {
    if (batch.empty()) throw StructuralError("forward: empty batch");
    const auto f = detail::factor_conv1(st);
    std::vector<Prediction> out;
    out.reserve(batch.size());
    for (const FcSet* fcs : batch) out.push_back(detail::forward_one(st, f, *fcs).prediction);
    return out;
}

inline Prediction forward_one(const ClassifierState& st, const FcSet& input) {
    const FcSet* p = &input;
    return forward(st, std::span<const FcSet* const>(&p, 1))[0];
}

// Contract entry point for spatial inputs; channels must be band-pure
// (produced by freq::to_spatial), which the projection recovers exactly.
inline std::vector<Prediction> forward(const ClassifierState& st,
                                       std::span<const MultiChannelImage> batch) {
    std::vector<FcSet> sets;
    sets.reserve(batch.size());
    for (const auto& mci : batch) sets.push_back(freq::fcset_from_spatial(mci));
    std::vector<const FcSet*> ptrs;
    for (const auto& s : sets) ptrs.push_back(&s);
    return forward(st, ptrs);
}

// Mean negative log-probability of the true class, from the log-sum-exp
// formulation (no raw log of probabilities).
inline double cross_entropy(std::span<const Prediction> preds, std::span<const int> labels) {
    if (preds.empty() || preds.size() != labels.size()) {
        throw StructuralError("cross_entropy: batch and labels disagree");
    }
    const int C = static_cast<int>(preds[0].logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 1 || labels[i] > C) throw StructuralError("cross_entropy: label out of 1..C");
        const auto& z = preds[i].logits;
        const double mx = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - mx);
        total -= z[labels[i] - 1] - (mx + std::log(lse));
    }
    return total / static_cast<double>(preds.size());
}

struct Gradients {
    std::vector<Tensor> tensors;
    double loss = 0.0;
    std::vector<Prediction> predictions;
};

// Analytic gradients of the mean cross-entropy over the batch with respect
// to every parameter tensor.
inline Gradients backward(const ClassifierState& st, std::span<const FcSet* const> batch,
                          std::span<const int> labels) {
    if (batch.empty() || batch.size() != labels.size()) {
        throw StructuralError("backward: batch and labels disagree");
    }
    const int k1 = st.config.conv1_channels, k2 = st.config.conv2_channels;
    const int C = st.config.n_classes;
    const auto f = detail::factor_conv1(st);

    Gradients g;
    for (const auto& t : st.params) g.tensors.push_back(Tensor::zeros_like(t));
    auto& g1w = g.tensors[kConv1W].values;
    auto& g1b = g.tensors[kConv1B].values;
    auto& g2w = g.tensors[kConv2W].values;
    auto& g2b = g.tensors[kConv2B].values;
    auto& gfw = g.tensors[kFcW].values;
    auto& gfb = g.tensors[kFcB].values;
    const auto& w2 = st.params[kConv2W].values;
    const auto& fw = st.params[kFcW].values;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const FcSet& input = *batch[bi];
        const auto cache = detail::forward_one(st, f, input);
        const int nb = cache.brows * cache.bcols;
        const int label = labels[bi];
        if (label < 1 || label > C) throw StructuralError("backward: label out of 1..C");

        const auto& z = cache.prediction.logits;
        const double mx = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - mx);
        g.loss -= (z[label - 1] - (mx + std::log(lse))) * inv_batch;

        // head
        std::vector<double> dlogits(C);
        for (int k = 0; k < C; ++k) {
            dlogits[k] = (cache.prediction.probabilities[k] - (k == label - 1 ? 1.0 : 0.0)) * inv_batch;
        }
        std::vector<double> dgap(k2, 0.0);
        for (int k = 0; k < C; ++k) {
            gfb[k] += dlogits[k];
            for (int oc = 0; oc < k2; ++oc) {
                gfw[static_cast<std::size_t>(k) * k2 + oc] += dlogits[k] * cache.gap[oc];
                dgap[oc] += fw[static_cast<std::size_t>(k) * k2 + oc] * dlogits[k];
            }
        }

        // through GAP and tanh of conv2
        std::vector<double> dz2(static_cast<std::size_t>(k2) * nb);
        for (int oc = 0; oc < k2; ++oc) {
            const double dg = dgap[oc] / nb;
            const double* h = cache.h2.data() + static_cast<std::size_t>(oc) * nb;
            double* dz = dz2.data() + static_cast<std::size_t>(oc) * nb;
            for (int blk = 0; blk < nb; ++blk) dz[blk] = dg * (1.0 - h[blk] * h[blk]);
        }

        // conv2 weight/bias grads and gradient into h1
        std::vector<double> dh1(static_cast<std::size_t>(k1) * nb, 0.0);
        for (int oc = 0; oc < k2; ++oc) {
            const double* dz = dz2.data() + static_cast<std::size_t>(oc) * nb;
            for (int blk = 0; blk < nb; ++blk) g2b[oc] += dz[blk];
            for (int ic = 0; ic < k1; ++ic) {
                const double* h = cache.h1.data() + static_cast<std::size_t>(ic) * nb;
                double* dh = dh1.data() + static_cast<std::size_t>(ic) * nb;
                double* gw = g2w.data() + (static_cast<std::size_t>(oc) * k1 + ic) * 9;
                const double* wp = w2.data() + (static_cast<std::size_t>(oc) * k1 + ic) * 9;
                for (int y = 0; y < cache.brows; ++y) {
                    for (int x = 0; x < cache.bcols; ++x) {
                        const double d = dz[y * cache.bcols + x];
                        if (d == 0.0) continue;
                        for (int dy = -1; dy <= 1; ++dy) {
                            const int yy = y + dy;
                            if (yy < 0 || yy >= cache.brows) continue;
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int xx = x + dx;
                                if (xx < 0 || xx >= cache.bcols) continue;
                                const int widx = (dy + 1) * 3 + (dx + 1);
                                gw[widx] += d * h[yy * cache.bcols + xx];
                                dh[yy * cache.bcols + xx] += d * wp[widx];
                            }
                        }
                    }
                }
            }
        }

        // through tanh of conv1, then the factored stride-8 convolution
        std::vector<double> dz1(static_cast<std::size_t>(k1) * nb);
        for (int oc = 0; oc < k1; ++oc) {
            const double* h = cache.h1.data() + static_cast<std::size_t>(oc) * nb;
            const double* dh = dh1.data() + static_cast<std::size_t>(oc) * nb;
            double* dz = dz1.data() + static_cast<std::size_t>(oc) * nb;
            for (int blk = 0; blk < nb; ++blk) dz[blk] = dh[blk] * (1.0 - h[blk] * h[blk]);
        }
        for (int oc = 0; oc < k1; ++oc) {
            const double* dz = dz1.data() + static_cast<std::size_t>(oc) * nb;
            double s0 = 0.0;
            for (int blk = 0; blk < nb; ++blk) s0 += dz[blk];
            g1b[oc] += s0;
            for (int c = 0; c < kColorChannels; ++c) {
                for (int band = 0; band < kBandCount; ++band) {
                    const int ic = MultiChannelImage::channel_index(c, band);
                    const auto coeffs = input.band(c, band);
                    double s1 = 0.0;
                    for (int blk = 0; blk < nb; ++blk) s1 += dz[blk] * coeffs[blk];
                    const auto& basis = freq::band_basis_block(band);
                    const double inv_sd = 1.0 / st.normalizer.stddev[ic];
                    const double mean_term = st.normalizer.mean[ic] * inv_sd * s0;
                    double* gw = g1w.data() + (static_cast<std::size_t>(oc) * kSpatialChannels + ic) * 64;
                    for (int p = 0; p < 64; ++p) gw[p] += s1 * inv_sd * basis[p] - mean_term;
                }
            }
        }
        g.predictions.push_back(cache.prediction);
    }
    return g;
}

// Effective learning rate for the next update given completed steps.
inline double current_lr(const OptimizerConfig& opt, long long step) {
    const long long decays = opt.lr_step_size > 0 ? step / opt.lr_step_size : 0;
    return opt.lr_base * std::pow(opt.lr_gamma, static_cast<double>(decays));
}

inline void optimizer_step(ClassifierState& st, const Gradients& grads) {
    if (grads.tensors.size() != st.params.size()) {
        throw StructuralError("optimizer_step: gradient tensors do not match parameters");
    }
    const auto& opt = st.optimizer;
    const double lr = current_lr(opt, st.step);
    const long long t = st.step + 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    for (std::size_t ti = 0; ti < st.params.size(); ++ti) {
        auto& p = st.params[ti].values;
        auto& m = st.adam_m[ti].values;
        auto& v = st.adam_v[ti].values;
        const auto& g = grads.tensors[ti].values;
        if (g.size() != p.size()) throw StructuralError("optimizer_step: tensor shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i])) throw NumericError("optimizer_step: non-finite gradient");
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
    ++st.step;
}

// --- checkpoints ----------------------------------------------------------

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"name", t.name}, {"shape", t.shape}, {"data", t.values}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    Tensor t;
    t.name = j.at("name").get<std::string>();
    t.shape = j.at("shape").get<std::vector<int>>();
    t.values = j.at("data").get<std::vector<double>>();
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    if (n != t.size()) throw StructuralError("checkpoint tensor shape/data mismatch: " + t.name);
    return t;
}

inline void save_checkpoint(const ClassifierState& st, const std::string& path,
                            const std::string& config_hash) {
    nlohmann::json j;
    j["format"] = "freqrand-checkpoint-v1";
    j["config_hash"] = config_hash;
    j["step"] = st.step;
    j["init_seed"] = st.init_seed;
    j["model"] = {{"input_channels", st.config.input_channels},
                  {"conv1_channels", st.config.conv1_channels},
                  {"conv2_channels", st.config.conv2_channels},
                  {"n_classes", st.config.n_classes}};
    j["optimizer"] = {{"beta1", st.optimizer.beta1},   {"beta2", st.optimizer.beta2},
                      {"epsilon", st.optimizer.epsilon}, {"lr_base", st.optimizer.lr_base},
                      {"lr_step_size", st.optimizer.lr_step_size}, {"lr_gamma", st.optimizer.lr_gamma}};
    j["normalizer"] = {{"mean", st.normalizer.mean}, {"stddev", st.normalizer.stddev}};
    j["params"] = nlohmann::json::array();
    j["adam_m"] = nlohmann::json::array();
    j["adam_v"] = nlohmann::json::array();
    for (const auto& t : st.params) j["params"].push_back(tensor_to_json(t));
    for (const auto& t : st.adam_m) j["adam_m"].push_back(tensor_to_json(t));
    for (const auto& t : st.adam_v) j["adam_v"].push_back(tensor_to_json(t));
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << j.dump() << "\n";
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

struct LoadedCheckpoint {
    ClassifierState state;
    std::string config_hash;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint " + path + ": " + e.what());
    }
    if (j.value("format", std::string()) != "freqrand-checkpoint-v1") {
        throw IoError("unrecognized checkpoint format in " + path);
    }
    LoadedCheckpoint out;
    out.config_hash = j.value("config_hash", std::string());
    auto& st = out.state;
    const auto& m = j.at("model");
    st.config.input_channels = m.at("input_channels").get<int>();
    st.config.conv1_channels = m.at("conv1_channels").get<int>();
    st.config.conv2_channels = m.at("conv2_channels").get<int>();
    st.config.n_classes = m.at("n_classes").get<int>();
    st.config.validate();
    const auto& o = j.at("optimizer");
    st.optimizer.beta1 = o.at("beta1").get<double>();
    st.optimizer.beta2 = o.at("beta2").get<double>();
    st.optimizer.epsilon = o.at("epsilon").get<double>();
    st.optimizer.lr_base = o.at("lr_base").get<double>();
    st.optimizer.lr_step_size = o.at("lr_step_size").get<long long>();
    st.optimizer.lr_gamma = o.at("lr_gamma").get<double>();
    st.step = j.at("step").get<long long>();
    st.init_seed = j.at("init_seed").get<std::uint64_t>();
    st.normalizer.mean = j.at("normalizer").at("mean").get<std::vector<double>>();
    st.normalizer.stddev = j.at("normalizer").at("stddev").get<std::vector<double>>();
    for (const auto& tj : j.at("params")) st.params.push_back(tensor_from_json(tj));
    for (const auto& tj : j.at("adam_m")) st.adam_m.push_back(tensor_from_json(tj));
    for (const auto& tj : j.at("adam_v")) st.adam_v.push_back(tensor_from_json(tj));
    if (st.params.size() != kParamTensors) throw IoError("checkpoint missing parameter tensors");
    return out;
}

} // namespace freqrand::model
