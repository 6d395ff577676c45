#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "freqrand/error.hpp"

namespace freqrand::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw StructuralError("mean: empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) throw StructuralError("variance: need at least two samples");
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

// Two-sample Kolmogorov-Smirnov statistic: sup |F_a - F_b|.
inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw StructuralError("ks_statistic: empty sample");
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < sa.size() && j < sb.size()) {
        const double v = std::min(sa[i], sb[j]);
        while (i < sa.size() && sa[i] <= v) ++i;
        while (j < sb.size() && sb[j] <= v) ++j;
        const double fa = static_cast<double>(i) / sa.size();
        const double fb = static_cast<double>(j) / sb.size();
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

// Standard normal upper tail.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Two-sided Welch test p-value with a normal approximation to the t
// distribution. Adequate here: callers use sample sizes well above 50.
inline double welch_p_value(std::span<const double> a, std::span<const double> b) {
    const double ma = mean(a), mb = mean(b);
    const double va = variance(a), vb = variance(b);
    const double se = std::sqrt(va / a.size() + vb / b.size());
    if (se == 0.0) return ma == mb ? 1.0 : 0.0;
    const double z = std::abs(ma - mb) / se;
    return 2.0 * normal_sf(z);
}

} // namespace freqrand::stats
