#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "freqrand/error.hpp"
#include "freqrand/image.hpp"

namespace freqrand::masks {

enum class Provenance { analysis, manual, learned };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::analysis: return "analysis";
        case Provenance::manual: return "manual";
        case Provenance::learned: return "learned";
    }
    return "manual";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "analysis") return Provenance::analysis;
    if (s == "manual") return Provenance::manual;
    if (s == "learned") return Provenance::learned;
    throw StructuralError("unknown mask provenance: " + s);
}

// 64-wide band mask: bit 1 = domain invariant (keep), 0 = domain variant.
struct SpectrumMask64 {
    std::array<std::uint8_t, kBandCount> bits{};
    Provenance provenance = Provenance::manual;
    std::string created_from;

    static SpectrumMask64 all_ones() {
        SpectrumMask64 m;
        m.bits.fill(1);
        return m;
    }
    static SpectrumMask64 all_zeros() { return SpectrumMask64{}; }

    int popcount() const { return std::accumulate(bits.begin(), bits.end(), 0); }
    bool is_all_ones() const { return popcount() == kBandCount; }
    bool is_all_zeros() const { return popcount() == 0; }
};

// 192-wide mask over (color, band) pairs, color-major band-minor.
struct SpectrumMask192 {
    std::array<std::uint8_t, kSpatialChannels> bits{};
    Provenance provenance = Provenance::learned;
    double p_used = 0.0;
    std::string created_from;

    static SpectrumMask192 all_ones() {
        SpectrumMask192 m;
        m.bits.fill(1);
        m.p_used = 1.0;
        return m;
    }
    static SpectrumMask192 all_zeros() { return SpectrumMask192{}; }

    int popcount() const { return std::accumulate(bits.begin(), bits.end(), 0); }
    bool is_all_ones() const { return popcount() == kSpatialChannels; }
    bool is_all_zeros() const { return popcount() == 0; }
};

// Entropy-weighted activation scores, one per (color, band) channel.
using BandScore = std::array<double, kSpatialChannels>;

// Binary accuracy of one prediction. Labels are 1-based class ids.
inline double accuracy_fn(int prediction, int truth) {
    if (prediction < 1 || truth < 1) {
        throw StructuralError("accuracy_fn: labels are 1-based class ids");
    }
    return prediction == truth ? 1.0 : 0.0;
}

// Keep the round(p*192) highest-scoring channels as domain invariant.
// Ties break toward the lower index.
inline SpectrumMask192 rank_select(const BandScore& scores, double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw StructuralError("rank_select: p must lie in [0,1]");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw NumericError("rank_select: non-finite score");
    }
    const int keep = static_cast<int>(std::lround(p * kSpatialChannels));
    std::array<int, kSpatialChannels> order;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    SpectrumMask192 mask;
    mask.provenance = Provenance::learned;
    mask.p_used = p;
    for (int i = 0; i < keep; ++i) mask.bits[order[i]] = 1;
    return mask;
}

// --- JSON serialization -----------------------------------------------------
// Document shape: {width, bits, provenance, p_used?, created_from}

inline nlohmann::json to_json(const SpectrumMask64& m) {
    nlohmann::json j;
    j["width"] = kBandCount;
    j["bits"] = std::vector<int>(m.bits.begin(), m.bits.end());
    j["provenance"] = to_string(m.provenance);
    j["created_from"] = m.created_from;
    return j;
}

inline nlohmann::json to_json(const SpectrumMask192& m) {
    nlohmann::json j;
    j["width"] = kSpatialChannels;
    j["bits"] = std::vector<int>(m.bits.begin(), m.bits.end());
    j["provenance"] = to_string(m.provenance);
    j["p_used"] = m.p_used;
    j["created_from"] = m.created_from;
    return j;
}

using AnyMask = std::variant<SpectrumMask64, SpectrumMask192>;

inline AnyMask mask_from_json(const nlohmann::json& j) {
    if (!j.contains("width") || !j.contains("bits")) {
        throw StructuralError("mask JSON: missing width or bits");
    }
    const int width = j.at("width").get<int>();
    const auto bits = j.at("bits").get<std::vector<int>>();
    if (static_cast<int>(bits.size()) != width) {
        throw StructuralError("mask JSON: bits length does not match width");
    }
    for (int b : bits) {
        if (b != 0 && b != 1) throw StructuralError("mask JSON: bits must be 0 or 1");
    }
    const auto prov = provenance_from_string(j.value("provenance", std::string("manual")));
    const auto created = j.value("created_from", std::string());
    if (width == kBandCount) {
        SpectrumMask64 m;
        std::copy(bits.begin(), bits.end(), m.bits.begin());
        m.provenance = prov;
        m.created_from = created;
        return m;
    }
    if (width == kSpatialChannels) {
        SpectrumMask192 m;
        std::copy(bits.begin(), bits.end(), m.bits.begin());
        m.provenance = prov;
        m.p_used = j.value("p_used", 0.0);
        m.created_from = created;
        return m;
    }
    throw StructuralError("mask JSON: width must be 64 or 192");
}

template <typename MaskT>
void save_mask(const MaskT& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open mask file for writing: " + path);
    out << to_json(m).dump(2) << "\n";
    if (!out) throw IoError("failed writing mask file: " + path);
}

inline AnyMask load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mask file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed mask JSON in " + path + ": " + e.what());
    }
    return mask_from_json(j);
}

} // namespace freqrand::masks
