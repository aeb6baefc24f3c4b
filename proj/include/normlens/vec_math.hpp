#pragma once

// Elementary vector math. Activations live as 32-bit floats; every reduction
// accumulates in 64-bit.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "normlens/errors.hpp"

namespace normlens {

using Vec = std::vector<float>;

inline constexpr double kPi = 3.14159265358979323846;

inline double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: dimension mismatch (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

inline double l2_norm(std::span<const float> a) {
    double acc = 0.0;
    for (float v : a) acc += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(acc);
}

inline double l2_norm(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc);
}

// Angle between two vectors in degrees, in [0, 180]. The cosine is clamped to
// [-1, 1] so rounding near 0 and 180 degrees cannot escape acos's domain.
inline double angle_degrees(std::span<const float> a, std::span<const float> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateAngleError("angle_degrees: zero-norm input");
    }
    const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
    return std::acos(c) * (180.0 / kPi);
}

inline Vec uniform_vector(int dim) {
    return Vec(static_cast<std::size_t>(dim), 1.0f);
}

// Angle to the uniform vector without materializing it: cos = sum(v)/(||v||*sqrt(d)).
inline double angle_to_uniform_degrees(std::span<const float> v) {
    double sum = 0.0, sq = 0.0;
    for (float x : v) {
        sum += static_cast<double>(x);
        sq += static_cast<double>(x) * static_cast<double>(x);
    }
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw DegenerateAngleError("angle_to_uniform: zero-norm input");
    const double c = std::clamp(sum / (norm * std::sqrt(static_cast<double>(v.size()))), -1.0, 1.0);
    return std::acos(c) * (180.0 / kPi);
}

} // namespace normlens
