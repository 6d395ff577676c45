#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqrand/config.hpp"
#include "freqrand/error.hpp"
#include "freqrand/freq.hpp"
#include "freqrand/histmatch.hpp"
#include "freqrand/model.hpp"
#include "freqrand/randomize.hpp"
#include "freqrand/rng.hpp"
#include "freqrand/spectrum_learning.hpp"
#include "freqrand/spectrum_mask.hpp"
#include "freqrand/toy.hpp"

// Training: the plain source loss, the two randomization losses, their
// unit-weight sum, the first-epoch warmup that keeps the learned-mask loss
// out, and the bidirectional reference schedule (score a reference batch,
// consume it image by image as randomization references, re-score when
// exhausted).
namespace freqrand::train {

enum class Mode { baseline, sa, sl, fsdr };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::baseline: return "baseline";
        case Mode::sa: return "sa";
        case Mode::sl: return "sl";
        case Mode::fsdr: return "fsdr";
    }
    return "baseline";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "baseline") return Mode::baseline;
    if (s == "sa") return Mode::sa;
    if (s == "sl") return Mode::sl;
    if (s == "fsdr") return Mode::fsdr;
    throw ConfigError("mode: expected baseline|sa|sl|fsdr, got \"" + s + "\"");
}

inline bool uses_sa(Mode m) { return m == Mode::sa || m == Mode::fsdr; }
inline bool uses_sl(Mode m) { return m == Mode::sl || m == Mode::fsdr; }

struct LossWeights {
    double orig = 1.0;
    double sa = 1.0;
    double sl = 1.0;
};

struct DataConfig {
    bool use_toy = true;
    data::ToyDomainSpec toy;
    std::uint64_t toy_seed = 7;
    std::string manifest_dir;
};

struct ReferenceConfig {
    enum class Source { target_val, directory };
    Source source = Source::target_val;
    std::string dir;
    int pool_size = 64;
};

struct OutputConfig {
    std::string metrics_csv;
    std::string checkpoint;
    std::string mask_sl;
};

struct TrainConfig {
    Mode mode = Mode::baseline;
    std::uint64_t seed = 1;
    int epochs = 8;
    int batch_size = 16;
    double p = 0.5;
    int n_bins = histmatch::kDefaultBins;
    int reference_batch_size = 8;
    LossWeights weights;
    double loss_scale = 1.0;
    model::ModelConfig model;
    model::OptimizerConfig optimizer;
    std::vector<int> reject_bands;
    DataConfig data;
    ReferenceConfig references;
    std::optional<masks::SpectrumMask64> mask_sa;
    OutputConfig outputs;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs: must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p: must lie in [0,1]");
        if (n_bins < 1) throw ConfigError("n_bins: must be >= 1");
        if (reference_batch_size < 1) throw ConfigError("reference_batch_size: must be >= 1");
        if (loss_scale <= 0.0) throw ConfigError("loss_scale: must be > 0");
        model.validate();
        if (uses_sa(mode) && !mask_sa) {
            throw ConfigError("mask_sa: required when mode is sa or fsdr");
        }
        if (!reject_bands.empty() && mode != Mode::baseline) {
            throw ConfigError("reject_bands: only valid with mode baseline");
        }
        for (int b : reject_bands) {
            if (b < 0 || b >= kBandCount) throw ConfigError("reject_bands: band out of 0..63");
        }
        if (!data.use_toy && data.manifest_dir.empty()) {
            throw ConfigError("data: provide either a toy spec or manifest_dir");
        }
        if (references.source == ReferenceConfig::Source::directory && references.dir.empty()) {
            throw ConfigError("references: directory source needs dir");
        }
    }
};

// Canonical JSON mirror; the config hash is computed over this document so
// every way of expressing the same run hashes identically.
inline nlohmann::json to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["mode"] = to_string(cfg.mode);
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["p"] = cfg.p;
    j["n_bins"] = cfg.n_bins;
    j["reference_batch_size"] = cfg.reference_batch_size;
    j["loss_weights"] = {{"orig", cfg.weights.orig}, {"sa", cfg.weights.sa}, {"sl", cfg.weights.sl}};
    j["loss_scale"] = cfg.loss_scale;
    j["model"] = {{"conv1_channels", cfg.model.conv1_channels},
                  {"conv2_channels", cfg.model.conv2_channels}};
    j["optimizer"] = {{"beta1", cfg.optimizer.beta1},     {"beta2", cfg.optimizer.beta2},
                      {"epsilon", cfg.optimizer.epsilon}, {"lr_base", cfg.optimizer.lr_base},
                      {"lr_step_size", cfg.optimizer.lr_step_size},
                      {"lr_gamma", cfg.optimizer.lr_gamma}};
    j["reject_bands"] = cfg.reject_bands;
    if (cfg.data.use_toy) {
        j["data"] = {{"toy", data::to_json(cfg.data.toy)}, {"toy_seed", cfg.data.toy_seed}};
    } else {
        j["data"] = {{"manifest_dir", cfg.data.manifest_dir}};
    }
    if (cfg.references.source == ReferenceConfig::Source::target_val) {
        j["references"] = {{"source", "target_val"}, {"pool_size", cfg.references.pool_size}};
    } else {
        j["references"] = {{"source", "directory"},
                           {"dir", cfg.references.dir},
                           {"pool_size", cfg.references.pool_size}};
    }
    if (cfg.mask_sa) {
        j["mask_sa"] = {{"bits", std::vector<int>(cfg.mask_sa->bits.begin(), cfg.mask_sa->bits.end())}};
    }
    return j;
}

inline std::string config_hash(const TrainConfig& cfg) { return config::hash_json(to_json(cfg)); }

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    config::require_known_keys(
        j,
        {"mode", "seed", "epochs", "batch_size", "p", "n_bins", "reference_batch_size",
         "loss_weights", "loss_scale", "model", "optimizer", "reject_bands", "data", "references",
         "mask_sa", "outputs"},
        "train config");
    TrainConfig cfg;
    cfg.mode = mode_from_string(config::optional_field<std::string>(j, "mode", "baseline", "train config"));
    cfg.seed = config::optional_field<std::uint64_t>(j, "seed", cfg.seed, "train config");
    cfg.epochs = config::optional_field<int>(j, "epochs", cfg.epochs, "train config");
    cfg.batch_size = config::optional_field<int>(j, "batch_size", cfg.batch_size, "train config");
    cfg.p = config::optional_field<double>(j, "p", cfg.p, "train config");
    cfg.n_bins = config::optional_field<int>(j, "n_bins", cfg.n_bins, "train config");
    cfg.reference_batch_size =
        config::optional_field<int>(j, "reference_batch_size", cfg.reference_batch_size, "train config");
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        config::require_known_keys(w, {"orig", "sa", "sl"}, "loss_weights");
        cfg.weights.orig = config::optional_field<double>(w, "orig", 1.0, "loss_weights");
        cfg.weights.sa = config::optional_field<double>(w, "sa", 1.0, "loss_weights");
        cfg.weights.sl = config::optional_field<double>(w, "sl", 1.0, "loss_weights");
    }
    cfg.loss_scale = config::optional_field<double>(j, "loss_scale", 1.0, "train config");
    if (j.contains("model")) {
        const auto& m = j.at("model");
        config::require_known_keys(m, {"conv1_channels", "conv2_channels"}, "model");
        cfg.model.conv1_channels =
            config::optional_field<int>(m, "conv1_channels", cfg.model.conv1_channels, "model");
        cfg.model.conv2_channels =
            config::optional_field<int>(m, "conv2_channels", cfg.model.conv2_channels, "model");
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        config::require_known_keys(
            o, {"beta1", "beta2", "epsilon", "lr_base", "lr_step_size", "lr_gamma"}, "optimizer");
        cfg.optimizer.beta1 = config::optional_field<double>(o, "beta1", cfg.optimizer.beta1, "optimizer");
        cfg.optimizer.beta2 = config::optional_field<double>(o, "beta2", cfg.optimizer.beta2, "optimizer");
        cfg.optimizer.epsilon =
            config::optional_field<double>(o, "epsilon", cfg.optimizer.epsilon, "optimizer");
        cfg.optimizer.lr_base =
            config::optional_field<double>(o, "lr_base", cfg.optimizer.lr_base, "optimizer");
        cfg.optimizer.lr_step_size = config::optional_field<long long>(
            o, "lr_step_size", cfg.optimizer.lr_step_size, "optimizer");
        cfg.optimizer.lr_gamma =
            config::optional_field<double>(o, "lr_gamma", cfg.optimizer.lr_gamma, "optimizer");
    }
    cfg.reject_bands =
        config::optional_field<std::vector<int>>(j, "reject_bands", {}, "train config");
    if (j.contains("data")) {
        const auto& d = j.at("data");
        config::require_known_keys(d, {"toy", "toy_seed", "manifest_dir"}, "data");
        if (d.contains("manifest_dir")) {
            cfg.data.use_toy = false;
            cfg.data.manifest_dir = config::require_field<std::string>(d, "manifest_dir", "data");
        } else {
            cfg.data.use_toy = true;
            if (d.contains("toy")) cfg.data.toy = data::toy_spec_from_json(d.at("toy"));
            cfg.data.toy_seed =
                config::optional_field<std::uint64_t>(d, "toy_seed", cfg.data.toy_seed, "data");
        }
    }
    if (j.contains("references")) {
        const auto& r = j.at("references");
        config::require_known_keys(r, {"source", "dir", "pool_size"}, "references");
        const auto src = config::optional_field<std::string>(r, "source", "target_val", "references");
        if (src == "target_val") {
            cfg.references.source = ReferenceConfig::Source::target_val;
        } else if (src == "directory") {
            cfg.references.source = ReferenceConfig::Source::directory;
            cfg.references.dir = config::require_field<std::string>(r, "dir", "references");
        } else {
            throw ConfigError("references.source: expected target_val|directory");
        }
        cfg.references.pool_size =
            config::optional_field<int>(r, "pool_size", cfg.references.pool_size, "references");
    }
    if (j.contains("mask_sa")) {
        const auto& m = j.at("mask_sa");
        config::require_known_keys(m, {"path", "bits"}, "mask_sa");
        if (m.contains("path")) {
            const auto loaded = masks::load_mask(m.at("path").get<std::string>());
            if (!std::holds_alternative<masks::SpectrumMask64>(loaded)) {
                throw ConfigError("mask_sa: mask file must be 64 wide");
            }
            cfg.mask_sa = std::get<masks::SpectrumMask64>(loaded);
        } else if (m.contains("bits")) {
            const auto bits = config::require_field<std::vector<int>>(m, "bits", "mask_sa");
            if (bits.size() != kBandCount) throw ConfigError("mask_sa.bits: must have 64 entries");
            masks::SpectrumMask64 mask;
            for (int i = 0; i < kBandCount; ++i) {
                if (bits[i] != 0 && bits[i] != 1) throw ConfigError("mask_sa.bits: entries must be 0/1");
                mask.bits[i] = static_cast<std::uint8_t>(bits[i]);
            }
            cfg.mask_sa = mask;
        } else {
            throw ConfigError("mask_sa: provide path or bits");
        }
    }
    if (j.contains("outputs")) {
        const auto& o = j.at("outputs");
        config::require_known_keys(o, {"metrics_csv", "checkpoint", "mask_sl"}, "outputs");
        cfg.outputs.metrics_csv = config::optional_field<std::string>(o, "metrics_csv", "", "outputs");
        cfg.outputs.checkpoint = config::optional_field<std::string>(o, "checkpoint", "", "outputs");
        cfg.outputs.mask_sl = config::optional_field<std::string>(o, "mask_sl", "", "outputs");
    }
    cfg.validate();
    return cfg;
}

// --- data plumbing ----------------------------------------------------------

struct RunData {
    data::Dataset source_train;
    data::Dataset source_val;
    data::Dataset target_val;
    data::ReferencePool pool;
};

inline RunData load_run_data(const TrainConfig& cfg) {
    RunData run;
    if (cfg.data.use_toy) {
        auto splits = data::generate_toy(cfg.data.toy, cfg.data.toy_seed);
        run.source_train = std::move(splits.source_train);
        run.source_val = std::move(splits.source_val);
        run.target_val = std::move(splits.target_val);
    } else {
        run.source_train = data::load_split(cfg.data.manifest_dir, "source_train");
        run.source_val = data::load_split(cfg.data.manifest_dir, "source_val");
        run.target_val = data::load_split(cfg.data.manifest_dir, "target_val");
    }
    if (run.source_train.empty()) throw ConfigError("data: empty source_train split");
    if (uses_sa(cfg.mode) || uses_sl(cfg.mode)) {
        if (cfg.references.source == ReferenceConfig::Source::directory) {
            run.pool = data::ReferencePool::from_directory(cfg.references.dir,
                                                           cfg.references.pool_size);
        } else {
            run.pool = data::ReferencePool::from_dataset(run.target_val, cfg.references.pool_size);
        }
        if (run.pool.images.empty()) throw ConfigError("references: pool is empty");
    }
    return run;
}

// --- evaluation ---------------------------------------------------------------

struct EvalMetrics {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    double mean_entropy = 0.0;
};

namespace detail {
inline masks::SpectrumMask64 reject_mask(const std::vector<int>& reject_bands) {
    auto mask = masks::SpectrumMask64::all_ones();
    for (int b : reject_bands) mask.bits[b] = 0;
    return mask;
}

inline FcSet pipeline_decompose(const Image& img, const std::vector<int>& reject_bands) {
    FcSet fcs = freq::band_pass_decompose(img);
    if (!reject_bands.empty()) fcs = freq::band_reject(fcs, reject_mask(reject_bands));
    return fcs;
}
} // namespace detail

inline EvalMetrics evaluate(const model::ClassifierState& state, const data::Dataset& dataset,
                            const std::vector<int>& reject_bands = {}) {
    if (dataset.empty()) throw StructuralError("evaluate: empty dataset");
    EvalMetrics m;
    m.per_class_accuracy.assign(state.config.n_classes, 0.0);
    std::vector<long long> class_total(state.config.n_classes, 0);
    std::vector<long long> class_hit(state.config.n_classes, 0);
    long long hits = 0;
    double entropy_sum = 0.0;
    for (const auto& sample : dataset.samples) {
        const FcSet fcs = detail::pipeline_decompose(sample.image, reject_bands);
        const auto pred = model::forward_one(state, fcs);
        const double correct = masks::accuracy_fn(pred.predicted_label, sample.label);
        hits += correct == 1.0 ? 1 : 0;
        entropy_sum += pred.entropy;
        class_total[sample.label - 1] += 1;
        class_hit[sample.label - 1] += correct == 1.0 ? 1 : 0;
    }
    m.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
    m.mean_entropy = entropy_sum / static_cast<double>(dataset.size());
    for (int k = 0; k < state.config.n_classes; ++k) {
        m.per_class_accuracy[k] =
            class_total[k] > 0 ? static_cast<double>(class_hit[k]) / class_total[k] : 0.0;
    }
    return m;
}

// --- losses -------------------------------------------------------------------

inline double loss_orig(const model::ClassifierState& state, std::span<const FcSet* const> batch,
                        std::span<const int> labels) {
    return model::cross_entropy(model::forward(state, batch), labels);
}

inline double loss_sa(const model::ClassifierState& state, std::span<const Image> batch,
                      std::span<const int> labels, const Image& reference,
                      const masks::SpectrumMask64& mask, int n_bins = histmatch::kDefaultBins) {
    std::vector<FcSet> randomized;
    randomized.reserve(batch.size());
    for (const auto& img : batch) {
        randomized.push_back(
            freq::band_pass_decompose(randomize::randomize_sa(img, reference, mask, n_bins).image));
    }
    std::vector<const FcSet*> ptrs;
    for (const auto& f : randomized) ptrs.push_back(&f);
    return model::cross_entropy(model::forward(state, ptrs), labels);
}

inline double loss_sl(const model::ClassifierState& state, std::span<const Image> batch,
                      std::span<const int> labels, const Image& reference,
                      const masks::SpectrumMask192& mask, int n_bins = histmatch::kDefaultBins,
                      bool allow_full_randomization = false) {
    std::vector<FcSet> randomized;
    randomized.reserve(batch.size());
    for (const auto& img : batch) {
        randomized.push_back(freq::band_pass_decompose(
            randomize::randomize_sl(img, reference, mask, n_bins, allow_full_randomization).image));
    }
    std::vector<const FcSet*> ptrs;
    for (const auto& f : randomized) ptrs.push_back(&f);
    return model::cross_entropy(model::forward(state, ptrs), labels);
}

// --- the training loop ---------------------------------------------------------

struct EpochMetrics {
    int epoch = 0;
    long long steps = 0;
    double lr = 0.0;
    bool has_orig = false, has_sa = false, has_sl = false;
    double loss_orig = 0.0, loss_sa = 0.0, loss_sl = 0.0, loss_total = 0.0;
    double source_val_acc = 0.0;
    double target_val_acc = 0.0;
    bool has_isl = false;
    int isl_popcount = 0;
    bool has_clamp = false;
    double clamp_rate = 0.0;
};

struct ReferenceRound {
    int epoch = 0;
    long long step = 0;
    std::vector<std::size_t> indices; // pool indices scored for this round
};

struct TrainResult {
    model::ClassifierState state;
    std::vector<EpochMetrics> metrics;
    std::optional<masks::SpectrumMask192> mask_sl;
    std::vector<ReferenceRound> reference_rounds;
    std::string hash;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Randomize one cached source decomposition against a reference
// decomposition, mirroring randomize_sa/_sl exactly: identical mask means
// identical input, otherwise match, reconstruct, clamp, re-decompose.
template <typename MaskT>
FcSet randomized_input(const FcSet& source_fc, const FcSet& reference_fc, const MaskT& mask,
                       int n_bins, bool allow_full, double* clamp_accum, long long* clamp_count) {
    if (mask.is_all_ones()) return source_fc;
    if (mask.is_all_zeros() && !allow_full) {
        throw StructuralError("randomize: all-zero mask without explicit override");
    }
    const FcSet matched = histmatch::match_fc(source_fc, reference_fc, mask, n_bins);
    const auto rec = randomize::reconstruct_full(matched);
    *clamp_accum += rec.clamp_rate;
    *clamp_count += 1;
    return freq::band_pass_decompose(rec.image);
}

} // namespace detail

inline TrainResult train_on(const TrainConfig& cfg, const RunData& run) {
    cfg.validate();
    TrainResult result;
    result.hash = config_hash(cfg);

    const int train_h = run.source_train.samples.front().image.height;
    const int train_w = run.source_train.samples.front().image.width;

    // one-time decompositions
    std::vector<FcSet> train_fcs;   // model inputs for the plain loss
    std::vector<int> train_labels;
    train_fcs.reserve(run.source_train.size());
    for (const auto& s : run.source_train.samples) {
        if (s.image.height != train_h || s.image.width != train_w) {
            throw ConfigError("data: source_train images must share one shape");
        }
        train_fcs.push_back(detail::pipeline_decompose(s.image, cfg.reject_bands));
        train_labels.push_back(s.label);
    }
    std::vector<const FcSet*> train_ptrs;
    for (const auto& f : train_fcs) train_ptrs.push_back(&f);

    const bool randomizing = uses_sa(cfg.mode) || uses_sl(cfg.mode);
    std::vector<FcSet> pool_fcs;
    if (randomizing) {
        pool_fcs.reserve(run.pool.images.size());
        for (const auto& img : run.pool.images) {
            const Image sized = (img.height == train_h && img.width == train_w)
                                    ? img
                                    : resize_bilinear(img, train_h, train_w);
            pool_fcs.push_back(freq::band_pass_decompose(sized));
        }
    }

    auto state = model::init_classifier(cfg.model, cfg.seed, cfg.optimizer);
    state.normalizer = model::fit_normalizer(train_ptrs);

    RandomSource train_rng(cfg.seed);
    RandomSource ref_rng(cfg.seed * 0x9e3779b97f4a7c15ull + 0x51ull);

    std::vector<std::size_t> order(train_fcs.size());
    std::iota(order.begin(), order.end(), 0);

    std::deque<std::size_t> round_queue;
    std::optional<masks::SpectrumMask192> mask_sl;
    long long global_step = 0;

    // Draw a fresh reference batch without replacement, score it with the
    // current model, and queue its images as randomization references.
    auto rescore_round = [&](int epoch) {
        const std::size_t batch = std::min<std::size_t>(cfg.reference_batch_size, pool_fcs.size());
        std::vector<std::size_t> pool_order(pool_fcs.size());
        std::iota(pool_order.begin(), pool_order.end(), 0);
        for (std::size_t i = 0; i < batch; ++i) {
            const std::size_t j = i + ref_rng.uniform_index(pool_order.size() - i);
            std::swap(pool_order[i], pool_order[j]);
        }
        pool_order.resize(batch);
        std::vector<const FcSet*> scored;
        for (std::size_t idx : pool_order) scored.push_back(&pool_fcs[idx]);
        mask_sl = masks::spectrum_learning(state, scored, cfg.p);
        mask_sl->created_from = result.hash;
        for (std::size_t idx : pool_order) round_queue.push_back(idx);
        result.reference_rounds.push_back({epoch, global_step, std::move(pool_order)});
    };

    const bool allow_full = cfg.p == 0.0; // the p-sweep endpoint randomizes everything

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const bool sl_active = uses_sl(cfg.mode) && epoch >= 2; // first-epoch warmup
        const bool sa_active = uses_sa(cfg.mode);
        train_rng.shuffle(order);

        EpochMetrics em;
        em.epoch = epoch;
        double sum_orig = 0.0, sum_sa = 0.0, sum_sl = 0.0, sum_total = 0.0;
        double clamp_accum = 0.0;
        long long clamp_count = 0;
        long long steps_this_epoch = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const FcSet*> batch;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_ptrs[order[i]]);
                labels.push_back(train_labels[order[i]]);
            }

            // one reference image per source batch, shared across the batch;
            // inside a spectrum-learning round it comes from the scored queue
            const FcSet* reference_fc = nullptr;
            if (sl_active) {
                if (round_queue.empty()) rescore_round(epoch);
                reference_fc = &pool_fcs[round_queue.front()];
                round_queue.pop_front();
            } else if (sa_active) {
                reference_fc = &pool_fcs[ref_rng.uniform_index(pool_fcs.size())];
            }

            model::Gradients total;
            for (const auto& t : state.params) total.tensors.push_back(model::Tensor::zeros_like(t));
            double step_loss = 0.0;

            auto accumulate = [&](const model::Gradients& g, double weight) {
                for (std::size_t ti = 0; ti < total.tensors.size(); ++ti) {
                    const auto& src = g.tensors[ti].values;
                    auto& dst = total.tensors[ti].values;
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
                }
            };

            {
                const auto g = model::backward(state, batch, labels);
                sum_orig += g.loss;
                step_loss += cfg.weights.orig * g.loss;
                accumulate(g, cfg.weights.orig);
                em.has_orig = true;
            }
            if (sa_active) {
                std::vector<FcSet> randomized;
                randomized.reserve(batch.size());
                for (std::size_t i = start; i < end; ++i) {
                    randomized.push_back(detail::randomized_input(train_fcs[order[i]], *reference_fc,
                                                                  *cfg.mask_sa, cfg.n_bins, false,
                                                                  &clamp_accum, &clamp_count));
                }
                std::vector<const FcSet*> ptrs;
                for (const auto& f : randomized) ptrs.push_back(&f);
                const auto g = model::backward(state, ptrs, labels);
                sum_sa += g.loss;
                step_loss += cfg.weights.sa * g.loss;
                accumulate(g, cfg.weights.sa);
                em.has_sa = true;
            }
            if (sl_active) {
                std::vector<FcSet> randomized;
                randomized.reserve(batch.size());
                for (std::size_t i = start; i < end; ++i) {
                    randomized.push_back(detail::randomized_input(train_fcs[order[i]], *reference_fc,
                                                                  *mask_sl, cfg.n_bins, allow_full,
                                                                  &clamp_accum, &clamp_count));
                }
                std::vector<const FcSet*> ptrs;
                for (const auto& f : randomized) ptrs.push_back(&f);
                const auto g = model::backward(state, ptrs, labels);
                sum_sl += g.loss;
                step_loss += cfg.weights.sl * g.loss;
                accumulate(g, cfg.weights.sl);
                em.has_sl = true;
            }

            if (!std::isfinite(step_loss)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(global_step) +
                                   ": non-finite loss " + std::to_string(step_loss));
            }
            if (cfg.loss_scale != 1.0) {
                for (auto& t : total.tensors)
                    for (auto& v : t.values) v *= cfg.loss_scale;
            }
            model::optimizer_step(state, total);
            sum_total += cfg.loss_scale * step_loss;
            ++steps_this_epoch;
            ++global_step;
        }

        em.steps = global_step;
        em.lr = model::current_lr(state.optimizer, state.step - 1);
        em.loss_orig = sum_orig / steps_this_epoch;
        em.loss_sa = em.has_sa ? sum_sa / steps_this_epoch : 0.0;
        em.loss_sl = em.has_sl ? sum_sl / steps_this_epoch : 0.0;
        em.loss_total = sum_total / steps_this_epoch;
        em.source_val_acc =
            run.source_val.empty() ? 0.0 : evaluate(state, run.source_val, cfg.reject_bands).accuracy;
        em.target_val_acc =
            run.target_val.empty() ? 0.0 : evaluate(state, run.target_val, cfg.reject_bands).accuracy;
        if (mask_sl) {
            em.has_isl = true;
            em.isl_popcount = mask_sl->popcount();
        }
        if (clamp_count > 0) {
            em.has_clamp = true;
            em.clamp_rate = clamp_accum / clamp_count;
        }
        result.metrics.push_back(em);
    }

    result.state = std::move(state);
    result.mask_sl = mask_sl;
    return result;
}

// Metrics CSV. Columns are fixed; fields of disabled loss terms stay empty
// (the first-epoch warmup check relies on the sl column being absent).
inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
    std::string out = "epoch,steps,lr,loss_orig,loss_sa,loss_sl,loss_total,"
                      "source_val_acc,target_val_acc,isl_popcount,clamp_rate\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.steps) + "," +
               detail::format_double(r.lr) + ",";
        out += (r.has_orig ? detail::format_double(r.loss_orig) : "") + std::string(",");
        out += (r.has_sa ? detail::format_double(r.loss_sa) : "") + std::string(",");
        out += (r.has_sl ? detail::format_double(r.loss_sl) : "") + std::string(",");
        out += detail::format_double(r.loss_total) + ",";
        out += detail::format_double(r.source_val_acc) + ",";
        out += detail::format_double(r.target_val_acc) + ",";
        out += (r.has_isl ? std::to_string(r.isl_popcount) : "") + std::string(",");
        out += (r.has_clamp ? detail::format_double(r.clamp_rate) : "") + std::string("\n");
    }
    return out;
}

inline TrainResult train_fsdr(const TrainConfig& cfg) {
    const RunData run = load_run_data(cfg);
    TrainResult result = train_on(cfg, run);
    if (!cfg.outputs.metrics_csv.empty()) {
        std::ofstream out(cfg.outputs.metrics_csv);
        if (!out) throw IoError("cannot write metrics CSV: " + cfg.outputs.metrics_csv);
        out << metrics_csv(result.metrics);
    }
    if (!cfg.outputs.checkpoint.empty()) {
        model::save_checkpoint(result.state, cfg.outputs.checkpoint, result.hash);
    }
    if (!cfg.outputs.mask_sl.empty() && result.mask_sl) {
        masks::save_mask(*result.mask_sl, cfg.outputs.mask_sl);
    }
    return result;
}

// --- p sweep -------------------------------------------------------------------

struct SweepRow {
    double p = 0.0;
    std::uint64_t seed = 0;
    double target_accuracy = 0.0;
    double source_accuracy = 0.0;
};

// FSDR-SL runs across p with shared seeds and data.
inline std::vector<SweepRow> sweep_p(const TrainConfig& base, const std::vector<double>& p_values) {
    TrainConfig cfg = base;
    cfg.mode = Mode::sl;
    cfg.outputs = {};
    std::vector<SweepRow> rows;
    const RunData run = load_run_data(cfg);
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep_p: p out of [0,1]");
        cfg.p = p;
        const auto result = train_on(cfg, run);
        rows.push_back({p, cfg.seed, result.metrics.back().target_val_acc,
                        result.metrics.back().source_val_acc});
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "p,seed,target_accuracy,source_accuracy\n";
    for (const auto& r : rows) {
        out += detail::format_double(r.p) + "," + std::to_string(r.seed) + "," +
               detail::format_double(r.target_accuracy) + "," +
               detail::format_double(r.source_accuracy) + "\n";
    }
    return out;
}

} // namespace freqrand::train
