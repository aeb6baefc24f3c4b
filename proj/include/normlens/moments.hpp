#pragma once

// Single-pass count/mean/variance/min/max accumulator (Welford), with Chan's
// pairwise formula for merging shards. Single writer per instance; cross-thread
// aggregation goes through merge only.

#include <cmath>
#include <cstdint>
#include <limits>

#include "normlens/errors.hpp"

namespace normlens {

struct StreamingMoments {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0; // sum of squared deviations from the running mean
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void update(double v) {
        if (!std::isfinite(v)) throw InvalidSampleError("StreamingMoments: non-finite sample");
        ++count;
        const double delta = v - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (v - mean);
        if (v < min) min = v;
        if (v > max) max = v;
    }

    // Population variance (divide by count).
    double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }

    static StreamingMoments merged(const StreamingMoments& a, const StreamingMoments& b) {
        if (a.count == 0) return b;
        if (b.count == 0) return a;
        StreamingMoments out;
        out.count = a.count + b.count;
        const double delta = b.mean - a.mean;
        const double na = static_cast<double>(a.count);
        const double nb = static_cast<double>(b.count);
        const double n = static_cast<double>(out.count);
        out.mean = a.mean + delta * nb / n;
        out.m2 = a.m2 + b.m2 + delta * delta * na * nb / n;
        out.min = a.min < b.min ? a.min : b.min;
        out.max = a.max > b.max ? a.max : b.max;
        return out;
    }

    void merge(const StreamingMoments& other) { *this = merged(*this, other); }
};

} // namespace normlens
