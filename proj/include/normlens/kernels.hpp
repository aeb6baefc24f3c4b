#pragma once

// Row-wise kernels over packed activation batches. Each kernel takes an Exec
// mode: Serial is the reference, Parallel runs the same per-row body under
// OpenMP. Rows are independent, so the two modes are bit-identical.

#include <cstdint>
#include <span>
#include <vector>

#include "normlens/parallel.hpp"
#include "normlens/vec_math.hpp"

namespace normlens {

struct VectorBatch {
    std::int64_t rows = 0;
    int dim = 0;
    std::vector<float> data;

    VectorBatch() = default;
    VectorBatch(std::int64_t rows_, int dim_)
        : rows(rows_), dim(dim_),
          data(static_cast<std::size_t>(rows_) * static_cast<std::size_t>(dim_)) {}

    std::span<float> row(std::int64_t i) {
        return {data.data() + i * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const float> row(std::int64_t i) const {
        return {data.data() + i * dim, static_cast<std::size_t>(dim)};
    }
};

// LayerNorm standardization (steps 1-2) applied to every row.
void standardize_rows(const VectorBatch& in, VectorBatch& out, double epsilon, Exec mode);

// RMS standardization applied to every row.
void rms_standardize_rows(const VectorBatch& in, VectorBatch& out, double epsilon, Exec mode);

// L2 norm of every row.
void row_norms(const VectorBatch& in, std::vector<double>& out, Exec mode);

// Angle of every row to the uniform vector, in degrees. Zero-norm rows get a
// quiet NaN; the aggregation layer skips and counts those.
void row_angles_to_uniform(const VectorBatch& in, std::vector<double>& out, Exec mode);

} // namespace normlens
