#include "normlens/kernels.hpp"

#include <cmath>
#include <limits>

#include "normlens/errors.hpp"
#include "normlens/normalize.hpp"

namespace normlens {

static void check_shapes(const VectorBatch& in, const VectorBatch& out) {
    if (in.rows != out.rows || in.dim != out.dim) {
        throw DimensionError("batch kernel: shape mismatch");
    }
}

void standardize_rows(const VectorBatch& in, VectorBatch& out, double epsilon, Exec mode) {
    check_shapes(in, out);
    const int d = in.dim;
    for_each_index(in.rows, mode, [&](std::int64_t r) {
        detail::standardize_row(in.data.data() + r * d, out.data.data() + r * d, d, epsilon);
    });
}

void rms_standardize_rows(const VectorBatch& in, VectorBatch& out, double epsilon, Exec mode) {
    check_shapes(in, out);
    const int d = in.dim;
    for_each_index(in.rows, mode, [&](std::int64_t r) {
        detail::rms_row(in.data.data() + r * d, out.data.data() + r * d, d, epsilon);
    });
}

void row_norms(const VectorBatch& in, std::vector<double>& out, Exec mode) {
    out.resize(static_cast<std::size_t>(in.rows));
    for_each_index(in.rows, mode, [&](std::int64_t r) {
        out[static_cast<std::size_t>(r)] = l2_norm(in.row(r));
    });
}

void row_angles_to_uniform(const VectorBatch& in, std::vector<double>& out, Exec mode) {
    out.resize(static_cast<std::size_t>(in.rows));
    for_each_index(in.rows, mode, [&](std::int64_t r) {
        const auto row = in.row(r);
        double sum = 0.0, sq = 0.0;
        for (float x : row) {
            sum += x;
            sq += static_cast<double>(x) * static_cast<double>(x);
        }
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
            out[static_cast<std::size_t>(r)] = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        const double c = std::clamp(sum / (norm * std::sqrt(static_cast<double>(in.dim))), -1.0, 1.0);
        out[static_cast<std::size_t>(r)] = std::acos(c) * (180.0 / kPi);
    });
}

} // namespace normlens
