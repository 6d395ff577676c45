#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqrand/error.hpp"
#include "freqrand/freq.hpp"
#include "freqrand/image.hpp"
#include "freqrand/png_io.hpp"
#include "freqrand/rng.hpp"
#include "freqrand/stats.hpp"

// Planted two-domain toy benchmark: class structure synthesized exclusively
// inside a known set of mid bands, domain style synthesized exclusively
// inside known low/high bands with different parameters per domain. The
// construction gives mask-identification tests a ground truth.
namespace freqrand::data {

enum class Domain { source, target };

inline std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
inline Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw StructuralError("unknown domain tag: " + s);
}

struct LabeledSample {
    Image image;
    int label = 1; // 1..C
    Domain domain = Domain::source;
};

struct Dataset {
    std::vector<LabeledSample> samples;
    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

// Style knobs for one domain. Shift and gradient amplitudes are in pixel
// units; the band coefficient sigmas are in coefficient units. Draws are
// truncated at 3 sigma so the generated pixels stay inside [0,1] without
// clamping (clamping would leak energy across the planted band boundary).
struct DomainStyleParams {
    std::array<double, 3> dc_shift{0.0, 0.0, 0.0};
    double dc_jitter_sigma = 0.015;
    double gradient_amp = 0.03;
    double band1_sigma = 0.03;
    double high_sigma = 0.001;
};

struct ToyDomainSpec {
    int image_size = 64;
    int n_classes = 4;
    std::vector<int> structure_bands;          // default 2..39
    std::vector<int> style_bands;              // default {0,1} + 40..63
    double structure_amp = 0.2;
    DomainStyleParams source_style{{+0.05, 0.00, -0.05}, 0.015, 0.03, 0.03, 0.001};
    DomainStyleParams target_style{{-0.05, +0.02, +0.05}, 0.015, 0.07, 0.12, 0.003};
    int train_samples = 256;
    int source_val_samples = 96;
    int target_val_samples = 256;

    ToyDomainSpec() {
        for (int b = 2; b < 40; ++b) structure_bands.push_back(b);
        style_bands = {0, 1};
        for (int b = 40; b < 64; ++b) style_bands.push_back(b);
    }

    void validate() const {
        if (image_size < 16 || image_size % kBlockSize != 0) {
            throw StructuralError("ToyDomainSpec: image_size must be a multiple of 8, >= 16");
        }
        if (n_classes < 2 || n_classes > 4) {
            throw StructuralError("ToyDomainSpec: n_classes must be 2..4");
        }
        if (structure_bands.empty() || style_bands.empty()) {
            throw StructuralError("ToyDomainSpec: band sets must be non-empty");
        }
        std::set<int> structure(structure_bands.begin(), structure_bands.end());
        for (int b : style_bands) {
            if (structure.count(b)) {
                throw StructuralError("ToyDomainSpec: structure and style bands overlap at " +
                                      std::to_string(b));
            }
        }
        for (int b : structure_bands) {
            if (b < 0 || b >= kBandCount) throw StructuralError("ToyDomainSpec: band out of 0..63");
        }
        for (int b : style_bands) {
            if (b < 0 || b >= kBandCount) throw StructuralError("ToyDomainSpec: band out of 0..63");
        }
    }
};

struct ToySplits {
    Dataset source_train;
    Dataset source_val;
    Dataset target_val;
};

namespace detail {

// Filled shape mask for one class, randomized in position and size.
inline std::vector<double> shape_mask(int cls, int size, RandomSource& rng) {
    std::vector<double> m(static_cast<std::size_t>(size) * size, 0.0);
    const double s = size;
    const double cx = s * rng.uniform(0.38, 0.62);
    const double cy = s * rng.uniform(0.38, 0.62);
    switch (cls) {
        case 1: { // circle
            const double r = s * rng.uniform(0.20, 0.30);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                        m[static_cast<std::size_t>(y) * size + x] = 1.0;
            break;
        }
        case 2: { // square
            const double h = s * rng.uniform(0.18, 0.27);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if (std::abs(x - cx) <= h && std::abs(y - cy) <= h)
                        m[static_cast<std::size_t>(y) * size + x] = 1.0;
            break;
        }
        case 3: { // plus sign
            const double t = s * rng.uniform(0.06, 0.10);
            const double l = s * rng.uniform(0.25, 0.34);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const bool horiz = std::abs(y - cy) <= t && std::abs(x - cx) <= l;
                    const bool vert = std::abs(x - cx) <= t && std::abs(y - cy) <= l;
                    if (horiz || vert) m[static_cast<std::size_t>(y) * size + x] = 1.0;
                }
            break;
        }
        case 4: { // upward triangle
            const double base = s * rng.uniform(0.42, 0.58);
            const double height = s * rng.uniform(0.42, 0.58);
            const double y0 = cy - height / 2.0;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double fy = (y - y0) / height;
                    if (fy < 0.0 || fy > 1.0) continue;
                    if (std::abs(x - cx) <= fy * base / 2.0)
                        m[static_cast<std::size_t>(y) * size + x] = 1.0;
                }
            break;
        }
        default:
            throw StructuralError("shape_mask: class out of 1..4");
    }
    return m;
}

// Project a grayscale pattern onto the structure bands and rescale so its
// pixel-space magnitude peaks at `amp`. Returns per-band coefficients.
inline FcSet structure_coefficients(const std::vector<double>& pattern, int size,
                                    const std::vector<int>& structure_bands, double amp) {
    Image gray(size, size);
    for (int c = 0; c < 3; ++c) gray.channel[c] = pattern;
    FcSet fcs = freq::band_pass_decompose(gray);
    std::set<int> keep(structure_bands.begin(), structure_bands.end());
    for (int band = 0; band < kBandCount; ++band) {
        if (keep.count(band)) continue;
        for (int c = 0; c < 3; ++c) {
            auto span = fcs.band(c, band);
            std::fill(span.begin(), span.end(), 0.0);
        }
    }
    const Image proj = freq::recompose(fcs);
    double peak = 0.0;
    for (double v : proj.channel[0]) peak = std::max(peak, std::abs(v));
    const double scale = peak > 0.0 ? amp / peak : 0.0;
    for (int c = 0; c < 3; ++c)
        for (auto& v : fcs.coeff[c]) v *= scale;
    return fcs;
}

inline LabeledSample generate_sample(const ToyDomainSpec& spec, Domain domain, int cls,
                                     RandomSource& rng) {
    const auto& style = domain == Domain::source ? spec.source_style : spec.target_style;
    const int size = spec.image_size;
    const int bcount = size / kBlockSize;

    FcSet fcs(size, size);

    // class structure, identical process for both domains
    const auto pattern = shape_mask(cls, size, rng);
    const auto structure =
        structure_coefficients(pattern, size, spec.structure_bands, spec.structure_amp);
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < fcs.coeff[c].size(); ++i) fcs.coeff[c][i] += structure.coeff[c][i];

    const bool dc_is_style = std::count(spec.style_bands.begin(), spec.style_bands.end(), 0) > 0;
    const bool band1_is_style = std::count(spec.style_bands.begin(), spec.style_bands.end(), 1) > 0;

    // low-band style: per-channel DC field (base + cast + jitter + smooth
    // gradient over the block grid) and a random band-1 coefficient field
    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const std::array<double, 3> jitter{rng.truncated_normal(style.dc_jitter_sigma),
                                       rng.truncated_normal(style.dc_jitter_sigma),
                                       rng.truncated_normal(style.dc_jitter_sigma)};
    for (int c = 0; c < 3; ++c) {
        auto dc = fcs.band(c, 0);
        for (int by = 0; by < bcount; ++by) {
            for (int bx = 0; bx < bcount; ++bx) {
                double level = 0.5;
                if (dc_is_style) {
                    const double gx = bcount > 1 ? bx / (bcount - 1.0) - 0.5 : 0.0;
                    const double gy = bcount > 1 ? by / (bcount - 1.0) - 0.5 : 0.0;
                    const double grad = std::cos(theta) * gx + std::sin(theta) * gy;
                    level += style.dc_shift[c] + jitter[c] + style.gradient_amp * grad;
                }
                dc[by * bcount + bx] += kBlockSize * level;
            }
        }
        if (band1_is_style) {
            for (auto& v : fcs.band(c, 1)) v += rng.truncated_normal(style.band1_sigma);
        }
    }

    // high-band style texture
    for (int band : spec.style_bands) {
        if (band <= 1) continue;
        for (int c = 0; c < 3; ++c)
            for (auto& v : fcs.band(c, band)) v += rng.truncated_normal(style.high_sigma);
    }

    LabeledSample out{freq::recompose(fcs), cls, domain};
    for (const auto& chan : out.image.channel) {
        for (double v : chan) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw NumericError("generate_toy: amplitudes overflow [0,1]; "
                                   "reduce style or structure amplitude");
            }
        }
    }
    return out;
}

inline Dataset generate_split(const ToyDomainSpec& spec, Domain domain, int count,
                              RandomSource& rng) {
    Dataset ds;
    ds.samples.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int cls = 1 + static_cast<int>(i % spec.n_classes); // balanced classes
        ds.samples.push_back(generate_sample(spec, domain, cls, rng));
    }
    return ds;
}

} // namespace detail

// Deterministic per seed: identical seeds give bitwise-identical datasets.
inline ToySplits generate_toy(const ToyDomainSpec& spec, std::uint64_t seed) {
    spec.validate();
    RandomSource rng(seed);
    ToySplits out;
    out.source_train = detail::generate_split(spec, Domain::source, spec.train_samples, rng);
    out.source_val = detail::generate_split(spec, Domain::source, spec.source_val_samples, rng);
    out.target_val = detail::generate_split(spec, Domain::target, spec.target_val_samples, rng);
    return out;
}

// --- generator self-check ----------------------------------------------------

struct PlantedShiftAudit {
    double structure_p_value = 0.0;   // Welch p on structure-band energies (want > 0.01)
    double dc_shift_p_value = 0.0;    // Welch p on DC means (want << 0.01 when DC is style)
    double zero_mean_style_ratio = 0.0;      // measured target/source energy ratio
    double expected_style_ratio = 0.0;       // ratio implied by the planted sigmas
    bool passed = false;
};

// Decomposition audit of the planted shift: structure-band energy must be
// statistically indistinguishable across domains while style-band energy
// differs by the planted amplitude ratio.
inline PlantedShiftAudit audit_planted_shift(const Dataset& source, const Dataset& target,
                                             const ToyDomainSpec& spec) {
    if (source.empty() || target.empty()) throw StructuralError("audit: empty dataset");
    std::set<int> style(spec.style_bands.begin(), spec.style_bands.end());

    auto collect = [&](const Dataset& ds, std::vector<double>& structure_energy,
                       std::vector<double>& zero_mean_style_energy, std::vector<double>& dc_mean) {
        for (const auto& sample : ds.samples) {
            const FcSet fcs = freq::band_pass_decompose(sample.image);
            double es = 0.0, ez = 0.0, dc = 0.0;
            for (int c = 0; c < 3; ++c) {
                for (int band = 0; band < kBandCount; ++band) {
                    double e = 0.0;
                    for (double v : fcs.band(c, band)) e += v * v;
                    if (style.count(band)) {
                        if (band != 0) ez += e; // zero-mean planted signals only
                    } else if (std::count(spec.structure_bands.begin(), spec.structure_bands.end(),
                                          band)) {
                        es += e;
                    }
                }
                for (double v : fcs.band(c, 0)) dc += v;
            }
            dc /= static_cast<double>(3 * fcs.n_blocks());
            structure_energy.push_back(es);
            zero_mean_style_energy.push_back(ez);
            dc_mean.push_back(dc);
        }
    };

    std::vector<double> s_struct, s_style, s_dc, t_struct, t_style, t_dc;
    collect(source, s_struct, s_style, s_dc);
    collect(target, t_struct, t_style, t_dc);

    PlantedShiftAudit audit;
    audit.structure_p_value = stats::welch_p_value(s_struct, t_struct);
    audit.dc_shift_p_value = stats::welch_p_value(s_dc, t_dc);

    audit.zero_mean_style_ratio = stats::mean(t_style) / stats::mean(s_style);

    // Expected ratio of zero-mean style energies. Variance of a 3-sigma
    // truncated normal is kappa * sigma^2.
    const double kappa = 1.0 - 2.0 * 3.0 * std::exp(-4.5) / std::sqrt(2.0 * 3.14159265358979323846) /
                                   std::erf(3.0 / std::sqrt(2.0));
    auto zero_mean_energy = [&](const DomainStyleParams& p) {
        double e = 0.0;
        if (std::count(spec.style_bands.begin(), spec.style_bands.end(), 1)) {
            e += kappa * p.band1_sigma * p.band1_sigma;
        }
        for (int band : spec.style_bands)
            if (band > 1) e += kappa * p.high_sigma * p.high_sigma;
        return e;
    };
    const double es = zero_mean_energy(spec.source_style);
    const double et = zero_mean_energy(spec.target_style);
    audit.expected_style_ratio = es > 0.0 ? et / es : 1.0;

    const bool style_planted = es > 0.0 || et > 0.0;
    const bool ratio_ok = !style_planted ||
                          std::abs(audit.zero_mean_style_ratio - audit.expected_style_ratio) <=
                              0.15 * audit.expected_style_ratio;
    const bool dc_ok = !std::count(spec.style_bands.begin(), spec.style_bands.end(), 0) ||
                       spec.source_style.dc_shift == spec.target_style.dc_shift ||
                       audit.dc_shift_p_value < 1e-6;
    audit.passed = audit.structure_p_value > 0.01 && ratio_ok && dc_ok;
    return audit;
}

// --- datasets on disk ---------------------------------------------------------
// Directory of PNGs plus manifest.json: [{path, label, domain, split}, ...]

inline void save_dataset(const ToySplits& splits, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    auto dump = [&](const Dataset& ds, const std::string& split) {
        int i = 0;
        for (const auto& sample : ds.samples) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.png", split.c_str(), i++);
            save_png(sample.image, (fs::path(dir) / name).string());
            manifest.push_back({{"path", name},
                                {"label", sample.label},
                                {"domain", to_string(sample.domain)},
                                {"split", split}});
        }
    };
    dump(splits.source_train, "source_train");
    dump(splits.source_val, "source_val");
    dump(splits.target_val, "target_val");
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

inline Dataset load_split(const std::string& dir, const std::string& split) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("cannot open manifest in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest in " + dir + ": " + e.what());
    }
    Dataset ds;
    for (const auto& row : manifest) {
        if (row.at("split").get<std::string>() != split) continue;
        LabeledSample sample;
        sample.image = load_png((fs::path(dir) / row.at("path").get<std::string>()).string()).image;
        sample.label = row.at("label").get<int>();
        sample.domain = domain_from_string(row.at("domain").get<std::string>());
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

// --- reference pool -----------------------------------------------------------

struct ReferencePool {
    std::vector<Image> images;

    static ReferencePool from_dataset(const Dataset& ds, std::size_t max_images = 64) {
        ReferencePool pool;
        for (const auto& s : ds.samples) {
            pool.images.push_back(s.image);
            if (pool.images.size() >= max_images) break;
        }
        return pool;
    }

    static ReferencePool from_directory(const std::string& dir, std::size_t max_images = 64) {
        namespace fs = std::filesystem;
        std::vector<fs::path> paths;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".png") paths.push_back(entry.path());
        }
        std::sort(paths.begin(), paths.end());
        ReferencePool pool;
        for (const auto& p : paths) {
            pool.images.push_back(load_png(p.string()).image);
            if (pool.images.size() >= max_images) break;
        }
        return pool;
    }
};

// Uniform draw from the pool, resized to the requested shape. The training
// loop layers the bidirectional scored-batch queue on top of this.
inline Image sample_reference(const ReferencePool& pool, RandomSource& rng, int height, int width) {
    if (pool.images.empty()) throw ConfigError("reference pool is empty");
    const auto& img = pool.images[rng.uniform_index(pool.images.size())];
    if (img.height == height && img.width == width) return img;
    return resize_bilinear(img, height, width);
}

// --- ToyDomainSpec JSON -------------------------------------------------------

inline nlohmann::json to_json(const DomainStyleParams& p) {
    return {{"dc_shift", p.dc_shift},
            {"dc_jitter_sigma", p.dc_jitter_sigma},
            {"gradient_amp", p.gradient_amp},
            {"band1_sigma", p.band1_sigma},
            {"high_sigma", p.high_sigma}};
}

inline DomainStyleParams style_from_json(const nlohmann::json& j) {
    DomainStyleParams p;
    p.dc_shift = j.value("dc_shift", p.dc_shift);
    p.dc_jitter_sigma = j.value("dc_jitter_sigma", p.dc_jitter_sigma);
    p.gradient_amp = j.value("gradient_amp", p.gradient_amp);
    p.band1_sigma = j.value("band1_sigma", p.band1_sigma);
    p.high_sigma = j.value("high_sigma", p.high_sigma);
    return p;
}

inline nlohmann::json to_json(const ToyDomainSpec& spec) {
    return {{"image_size", spec.image_size},
            {"n_classes", spec.n_classes},
            {"structure_bands", spec.structure_bands},
            {"style_bands", spec.style_bands},
            {"structure_amp", spec.structure_amp},
            {"source_style", to_json(spec.source_style)},
            {"target_style", to_json(spec.target_style)},
            {"train_samples", spec.train_samples},
            {"source_val_samples", spec.source_val_samples},
            {"target_val_samples", spec.target_val_samples}};
}

inline ToyDomainSpec toy_spec_from_json(const nlohmann::json& j) {
    ToyDomainSpec spec;
    spec.image_size = j.value("image_size", spec.image_size);
    spec.n_classes = j.value("n_classes", spec.n_classes);
    spec.structure_bands = j.value("structure_bands", spec.structure_bands);
    spec.style_bands = j.value("style_bands", spec.style_bands);
    spec.structure_amp = j.value("structure_amp", spec.structure_amp);
    if (j.contains("source_style")) spec.source_style = style_from_json(j.at("source_style"));
    if (j.contains("target_style")) spec.target_style = style_from_json(j.at("target_style"));
    spec.train_samples = j.value("train_samples", spec.train_samples);
    spec.source_val_samples = j.value("source_val_samples", spec.source_val_samples);
    spec.target_val_samples = j.value("target_val_samples", spec.target_val_samples);
    spec.validate();
    return spec;
}

} // namespace freqrand::data
