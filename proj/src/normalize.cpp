#include "normlens/normalize.hpp"

#include <cmath>

#include "normlens/errors.hpp"

namespace normlens {

const char* norm_kind_name(NormKind kind) {
    return kind == NormKind::LayerNorm ? "layernorm" : "rmsnorm";
}

NormKind norm_kind_from_name(const std::string& name) {
    if (name == "layernorm") return NormKind::LayerNorm;
    if (name == "rmsnorm") return NormKind::RMSNorm;
    throw FormatError("unknown norm kind: " + name);
}

NormParams NormParams::identity(NormKind kind, int dim, float epsilon) {
    NormParams p;
    p.kind = kind;
    p.epsilon = epsilon;
    p.gain.assign(static_cast<std::size_t>(dim), 1.0f);
    p.bias.assign(static_cast<std::size_t>(dim), 0.0f);
    return p;
}

UniformBasis::UniformBasis(int d) : dim(d) {
    const float inv = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    unit.assign(static_cast<std::size_t>(d), inv);
}

double mean_scalar(std::span<const float> x) {
    double sum = 0.0;
    for (float v : x) sum += v;
    return sum / static_cast<double>(x.size());
}

Decomposition decompose(std::span<const float> x) {
    if (x.size() < 2) throw DimensionError("decompose: dim must be >= 2");
    Decomposition d;
    d.mean_scalar = mean_scalar(x);
    const std::size_t n = x.size();
    d.mean_vector.assign(n, static_cast<float>(d.mean_scalar));
    d.perp.resize(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const float p = static_cast<float>(x[i] - d.mean_scalar);
        d.perp[i] = p;
        sq += static_cast<double>(p) * static_cast<double>(p);
    }
    d.perp_norm = std::sqrt(sq);
    return d;
}

namespace detail {

void standardize_row(const float* x, float* y, int d, double epsilon) {
    double sum = 0.0;
    for (int i = 0; i < d; ++i) sum += x[i];
    const double mu = sum / d;
    double sq = 0.0;
    for (int i = 0; i < d; ++i) {
        const double c = x[i] - mu;
        sq += c * c;
    }
    const double denom = std::sqrt(sq / d + epsilon);
    if (denom == 0.0) {
        // sigma == 0 and eps == 0: all components equal, output is the zero vector
        for (int i = 0; i < d; ++i) y[i] = 0.0f;
        return;
    }
    const double inv = 1.0 / denom;
    for (int i = 0; i < d; ++i) y[i] = static_cast<float>((x[i] - mu) * inv);
}

void rms_row(const float* x, float* y, int d, double epsilon) {
    double sq = 0.0;
    for (int i = 0; i < d; ++i) sq += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    const double denom = std::sqrt(sq / d + epsilon);
    if (denom == 0.0) {
        for (int i = 0; i < d; ++i) y[i] = 0.0f;
        return;
    }
    const double inv = 1.0 / denom;
    for (int i = 0; i < d; ++i) y[i] = static_cast<float>(x[i] * inv);
}

} // namespace detail

Vec standardize_procedural(std::span<const float> x, double epsilon) {
    if (x.size() < 2) throw DimensionError("standardize: dim must be >= 2");
    Vec y(x.size());
    detail::standardize_row(x.data(), y.data(), static_cast<int>(x.size()), epsilon);
    return y;
}

Vec standardize_geometric(std::span<const float> x, double epsilon) {
    if (x.size() < 2) throw DimensionError("standardize: dim must be >= 2");
    const auto d = decompose(x);
    const double dim = static_cast<double>(x.size());
    const double denom = std::sqrt(d.perp_norm * d.perp_norm + dim * epsilon);
    Vec y(x.size(), 0.0f);
    if (denom == 0.0) return y; // no orthogonal component, nothing to normalize
    const double scale = std::sqrt(dim) / denom;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = static_cast<float>(d.perp[i] * scale);
    }
    return y;
}

Vec rms_standardize(std::span<const float> x, double epsilon) {
    if (x.empty()) throw DimensionError("rms_standardize: dim must be >= 1");
    Vec y(x.size());
    detail::rms_row(x.data(), y.data(), static_cast<int>(x.size()), epsilon);
    return y;
}

Vec scale_shift(std::span<const float> y, const NormParams& params) {
    if (y.size() != params.gain.size() || y.size() != params.bias.size()) {
        throw DimensionError("scale_shift: parameter dimension mismatch");
    }
    Vec z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        z[i] = static_cast<float>(static_cast<double>(params.gain[i]) * y[i] +
                                  static_cast<double>(params.bias[i]));
    }
    return z;
}

BatchStats batchnorm_fit(const std::vector<Vec>& batch) {
    if (batch.size() < 2) throw InsufficientBatchError("batchnorm_fit: need at least 2 vectors");
    const std::size_t d = batch[0].size();
    for (const auto& v : batch) {
        if (v.size() != d) throw DimensionError("batchnorm_fit: ragged batch");
    }
    const double n = static_cast<double>(batch.size());
    BatchStats stats;
    stats.mean.resize(d);
    stats.variance.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        double sum = 0.0;
        for (const auto& v : batch) sum += v[i];
        const double mu = sum / n;
        double sq = 0.0;
        for (const auto& v : batch) {
            const double c = v[i] - mu;
            sq += c * c;
        }
        stats.mean[i] = static_cast<float>(mu);
        stats.variance[i] = static_cast<float>(sq / n);
    }
    return stats;
}

RecoveryReport recovery_probe(const std::vector<Vec>& batch, RecoveryKind kind) {
    if (batch.size() < 2) throw InsufficientBatchError("recovery_probe: need at least 2 vectors");
    const std::size_t b = batch.size();
    const std::size_t d = batch[0].size();

    // Standardize with eps 0: the probe asks what scale-and-shift alone can undo.
    std::vector<Vec> std_batch(b);
    if (kind == RecoveryKind::LayerNorm) {
        for (std::size_t j = 0; j < b; ++j) {
            std_batch[j] = standardize_procedural(batch[j], 0.0);
        }
    } else {
        const BatchStats stats = batchnorm_fit(batch);
        for (std::size_t j = 0; j < b; ++j) {
            if (batch[j].size() != d) throw DimensionError("recovery_probe: ragged batch");
            std_batch[j].resize(d);
            for (std::size_t i = 0; i < d; ++i) {
                const double var = stats.variance[i];
                std_batch[j][i] = var > 0.0
                    ? static_cast<float>((batch[j][i] - stats.mean[i]) / std::sqrt(var))
                    : 0.0f;
            }
        }
    }

    RecoveryReport report;
    report.alpha.resize(d);
    report.beta.resize(d);
    double total_sq = 0.0;
    const double n = static_cast<double>(b);
    for (std::size_t i = 0; i < d; ++i) {
        double sy = 0.0, sx = 0.0, syy = 0.0, sxy = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            const double y = std_batch[j][i];
            const double x = batch[j][i];
            sy += y;
            sx += x;
            syy += y * y;
            sxy += y * x;
        }
        const double var_y = syy / n - (sy / n) * (sy / n);
        double alpha, beta;
        if (var_y <= 1e-24) {
            // constant standardized column: no slope to fit
            alpha = 0.0;
            beta = sx / n;
        } else {
            const double cov = sxy / n - (sy / n) * (sx / n);
            alpha = cov / var_y;
            beta = sx / n - alpha * (sy / n);
        }
        report.alpha[i] = static_cast<float>(alpha);
        report.beta[i] = static_cast<float>(beta);
        for (std::size_t j = 0; j < b; ++j) {
            const double r = alpha * std_batch[j][i] + beta - batch[j][i];
            total_sq += r * r;
        }
    }
    report.rmse = std::sqrt(total_sq / (n * static_cast<double>(d)));
    return report;
}

} // namespace normlens
