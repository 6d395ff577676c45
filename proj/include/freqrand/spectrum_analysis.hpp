#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqrand/config.hpp"
#include "freqrand/error.hpp"
#include "freqrand/spectrum_mask.hpp"
#include "freqrand/train.hpp"

// Static identification of domain-variant bands: train a reference model on
// the full spectrum, retrain with one candidate band range rejected at a
// time (identical seeds and schedules), and compare target accuracy. A
// range whose rejection strictly improves target accuracy is marked domain
// variant; ties count as invariant, which avoids randomizing bands the
// evidence does not implicate.
namespace freqrand::masks {

struct BandRange {
    int lo = 0; // inclusive
    int hi = 0; // exclusive

    std::string label() const {
        return "[" + std::to_string(lo) + "," + std::to_string(hi) + ")";
    }
};

// The seven default ranges used throughout: [0,1) [1,2) [2,4) [4,8) [8,16)
// [16,32) [32,64).
inline std::vector<BandRange> default_candidate_ranges() {
    return {{0, 1}, {1, 2}, {2, 4}, {4, 8}, {8, 16}, {16, 32}, {32, 64}};
}

inline void validate_partition(const std::vector<BandRange>& ranges) {
    if (ranges.empty()) throw StructuralError("spectrum_analysis: no candidate ranges");
    auto sorted = ranges;
    std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return a.lo < b.lo; });
    int cursor = 0;
    for (const auto& r : sorted) {
        if (r.lo >= r.hi) throw StructuralError("spectrum_analysis: empty range " + r.label());
        if (r.lo != cursor) {
            throw StructuralError("spectrum_analysis: ranges must partition 0..63 (gap or overlap at " +
                                  std::to_string(r.lo) + ")");
        }
        cursor = r.hi;
    }
    if (cursor != kBandCount) {
        throw StructuralError("spectrum_analysis: ranges must cover bands up to 63");
    }
}

struct AnalysisRangeResult {
    BandRange range;
    double source_accuracy = 0.0;
    double target_accuracy = 0.0;
    bool variant = false;
};

struct AnalysisReport {
    double full_source_accuracy = 0.0;
    double full_target_accuracy = 0.0;
    std::vector<AnalysisRangeResult> ranges;
    SpectrumMask64 mask;
};

// Runs 1 + |ranges| trainings. The trainer config supplies data, model,
// optimizer, seed and schedule; its mode and reject list are overridden.
// Every run evaluates through its own input pipeline, i.e. a model trained
// with rejected bands is also evaluated on band-rejected target inputs.
inline AnalysisReport spectrum_analysis(const train::TrainConfig& trainer_config,
                                        const std::vector<BandRange>& candidate_ranges =
                                            default_candidate_ranges()) {
    validate_partition(candidate_ranges);

    train::TrainConfig cfg = trainer_config;
    cfg.mode = train::Mode::baseline;
    cfg.reject_bands.clear();
    cfg.outputs = {};
    const train::RunData run = train::load_run_data(cfg);

    AnalysisReport report;
    {
        const auto result = train::train_on(cfg, run);
        report.full_source_accuracy =
            train::evaluate(result.state, run.source_val.empty() ? run.source_train : run.source_val)
                .accuracy;
        report.full_target_accuracy = train::evaluate(result.state, run.target_val).accuracy;
    }

    report.mask = SpectrumMask64::all_ones();
    report.mask.provenance = Provenance::analysis;
    for (const auto& range : candidate_ranges) {
        train::TrainConfig rejected = cfg;
        for (int b = range.lo; b < range.hi; ++b) rejected.reject_bands.push_back(b);
        const auto result = train::train_on(rejected, run);
        AnalysisRangeResult row;
        row.range = range;
        row.source_accuracy =
            train::evaluate(result.state, run.source_val.empty() ? run.source_train : run.source_val,
                            rejected.reject_bands)
                .accuracy;
        row.target_accuracy =
            train::evaluate(result.state, run.target_val, rejected.reject_bands).accuracy;
        row.variant = row.target_accuracy > report.full_target_accuracy;
        if (row.variant) {
            for (int b = range.lo; b < range.hi; ++b) report.mask.bits[b] = 0;
        }
        report.ranges.push_back(row);
    }
    report.mask.created_from = train::config_hash(cfg);
    return report;
}

inline nlohmann::json to_json(const AnalysisReport& report) {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : report.ranges) {
        ranges.push_back({{"range", r.range.label()},
                          {"source_accuracy", r.source_accuracy},
                          {"target_accuracy", r.target_accuracy},
                          {"variant", r.variant}});
    }
    return {{"full_source_accuracy", report.full_source_accuracy},
            {"full_target_accuracy", report.full_target_accuracy},
            {"ranges", ranges},
            {"mask", to_json(report.mask)}};
}

} // namespace freqrand::masks
