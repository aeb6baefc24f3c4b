#pragma once

// LayerNorm in its procedural form (mean/std per vector) and its geometric
// form (drop the component along the uniform vector, renormalize, scale by
// sqrt(d)), RMSNorm, scale-and-shift, reference BatchNorm, and the
// least-squares recovery probe. The two LayerNorm routes are independent
// implementations and must agree; tests hold them against each other.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "normlens/vec_math.hpp"

namespace normlens {

enum class NormKind { LayerNorm, RMSNorm };

const char* norm_kind_name(NormKind kind);
NormKind norm_kind_from_name(const std::string& name); // throws FormatError

struct NormParams {
    NormKind kind = NormKind::LayerNorm;
    float epsilon = 1e-5f;
    Vec gain; // alpha
    Vec bias; // beta; identically zero for RMSNorm

    static NormParams identity(NormKind kind, int dim, float epsilon = 1e-5f);
};

// The uniform direction 1 = [1,...,1] and its unit vector.
struct UniformBasis {
    int dim;
    Vec unit; // every component 1/sqrt(dim)
    explicit UniformBasis(int dim);
};

// x split against the uniform direction: x = mean_vector + perp.
struct Decomposition {
    double mean_scalar = 0.0; // mu
    Vec mean_vector;          // mu * 1
    Vec perp;                 // component orthogonal to 1
    double perp_norm = 0.0;
};

// Per-dimension statistics over a batch (reference BatchNorm).
struct BatchStats {
    Vec mean;
    Vec variance; // biased (divide by batch size)
};

struct RecoveryReport {
    double rmse = 0.0;
    Vec alpha;
    Vec beta;
};

enum class RecoveryKind { LayerNorm, BatchNorm };

double mean_scalar(std::span<const float> x);

Decomposition decompose(std::span<const float> x);

// Steps 1-2: subtract the component mean, divide by sqrt(var + eps) with
// biased variance. A constant vector maps to the zero vector.
Vec standardize_procedural(std::span<const float> x, double epsilon);

// Same map written geometrically: sqrt(d) * perp / sqrt(|perp|^2 + d*eps).
// The eps placement makes the two forms agree identically.
Vec standardize_geometric(std::span<const float> x, double epsilon);

// y_i = x_i / sqrt(mean(x_j^2) + eps); pure rescaling, keeps the direction.
Vec rms_standardize(std::span<const float> x, double epsilon);

// z = alpha .* y + beta
Vec scale_shift(std::span<const float> y, const NormParams& params);

BatchStats batchnorm_fit(const std::vector<Vec>& batch);

// Standardizes the batch under `kind`, then fits per-dimension (alpha, beta)
// by ordinary least squares to reconstruct the originals. BatchNorm recovers
// exactly; LayerNorm generally cannot.
RecoveryReport recovery_probe(const std::vector<Vec>& batch, RecoveryKind kind);

// Row cores shared by the single-vector API and the batch kernels. Inputs and
// outputs may alias.
namespace detail {
void standardize_row(const float* x, float* y, int d, double epsilon);
void rms_row(const float* x, float* y, int d, double epsilon);
} // namespace detail

} // namespace normlens
