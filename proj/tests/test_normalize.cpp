#include "doctest.h"

#include <cmath>

#include "normlens/errors.hpp"
#include "normlens/normalize.hpp"
#include "normlens/rng.hpp"

using namespace normlens;

namespace {

Vec random_vec(SeededRng& rng, int d, double scale = 1.0) {
    Vec v(static_cast<std::size_t>(d));
    for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
    return v;
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    }
    return worst;
}

double rel_vec_diff(std::span<const float> a, std::span<const float> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        num += d * d;
        den = std::max(den, std::max(double(a[i]) * a[i], double(b[i]) * b[i]));
    }
    return std::sqrt(num) / std::max(std::sqrt(den * a.size()), 1e-12);
}

} // namespace

TEST_CASE("mean_scalar") {
    CHECK(mean_scalar(Vec{3, 1}) == doctest::Approx(2.0));
    CHECK(mean_scalar(Vec{4.5f, 4.5f, 4.5f, 4.5f}) == doctest::Approx(4.5));
    CHECK(mean_scalar(Vec{1, -1}) == doctest::Approx(0.0));
}

TEST_CASE("decompose") {
    const auto d = decompose(Vec{3, 1});
    CHECK(d.mean_scalar == doctest::Approx(2.0));
    CHECK(d.mean_vector == Vec{2, 2});
    CHECK(d.perp == Vec{1, -1});
    CHECK(d.perp_norm == doctest::Approx(std::sqrt(2.0)));

    const auto c = decompose(Vec{7, 7});
    CHECK(c.perp == Vec{0, 0});
    CHECK(c.perp_norm == doctest::Approx(0.0));

    CHECK_THROWS_AS(decompose(Vec{1.0f}), DimensionError);
}

TEST_CASE("mean vector norm equals the projection onto the uniform direction") {
    SeededRng rng(21);
    for (int d : {2, 8, 64}) {
        const auto ones = uniform_vector(d);
        for (int trial = 0; trial < 100; ++trial) {
            const auto x = random_vec(rng, d, 2.0);
            const auto dec = decompose(x);
            const double norm_mu = l2_norm(std::span<const float>(dec.mean_vector));
            double sum = 0.0;
            for (float v : x) sum += v;
            const double sqrtd = std::sqrt(static_cast<double>(d));
            CHECK(norm_mu == doctest::Approx(std::abs(sum) / sqrtd).epsilon(1e-6));
            const double cos_theta = dot(x, ones) / (l2_norm(std::span<const float>(x)) * sqrtd);
            CHECK(norm_mu ==
                  doctest::Approx(l2_norm(std::span<const float>(x)) * std::abs(cos_theta))
                      .epsilon(1e-6));
            // perp really is orthogonal to the uniform vector
            CHECK(std::abs(dot(dec.perp, ones)) <= 1e-6 * dec.perp_norm * sqrtd + 1e-12);
        }
    }
}

TEST_CASE("standardize_procedural") {
    CHECK(standardize_procedural(Vec{3, 1}, 0.0) == Vec{1, -1});

    const auto y = standardize_procedural(Vec{2, 0, -2}, 0.0);
    CHECK(std::abs(y[0] - 1.22474) <= 1e-4);
    CHECK(std::abs(y[1]) <= 1e-6);
    CHECK(std::abs(y[2] + 1.22474) <= 1e-4);
    CHECK(l2_norm(std::span<const float>(y)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-6));

    CHECK(standardize_procedural(Vec{5, 5, 5}, 0.0) == Vec{0, 0, 0});
    CHECK(standardize_procedural(Vec{5, 5, 5}, 1e-5) == Vec{0, 0, 0});
}

TEST_CASE("standardize_geometric") {
    CHECK(standardize_geometric(Vec{3, 1}, 0.0) == Vec{1, -1});
    CHECK(standardize_geometric(Vec{4, 4, 4}, 0.0) == Vec{0, 0, 0});

    SeededRng rng(31);
    for (int d : {2, 8, 64, 1024}) {
        const double sqrtd = std::sqrt(static_cast<double>(d));
        for (int trial = 0; trial < 50; ++trial) {
            const auto x = random_vec(rng, d);
            if (decompose(x).perp_norm < 1e-3) continue;
            const auto y = standardize_geometric(x, 0.0);
            CHECK(std::abs(l2_norm(std::span<const float>(y)) - sqrtd) <= 1e-4 * sqrtd);
        }
    }
}

TEST_CASE("geometric and procedural forms agree elementwise") {
    SeededRng rng(41);
    for (int d : {2, 8, 64, 1024}) {
        const double bound = 1e-5 * std::sqrt(static_cast<double>(d));
        for (int trial = 0; trial < 1000; ++trial) {
            const auto x = random_vec(rng, d);
            for (double eps : {0.0, 1e-5}) {
                CHECK(max_abs_diff(standardize_procedural(x, eps),
                                   standardize_geometric(x, eps)) <= bound);
            }
        }
    }
}

TEST_CASE("rms_standardize") {
    const auto y = rms_standardize(Vec{3, 4}, 0.0);
    CHECK(std::abs(y[0] - 0.84853) <= 1e-4);
    CHECK(std::abs(y[1] - 1.13137) <= 1e-4);
    CHECK(l2_norm(std::span<const float>(y)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));

    CHECK(rms_standardize(Vec{0, 0}, 1e-5) == Vec{0, 0});
    CHECK(rms_standardize(Vec{0, 0}, 0.0) == Vec{0, 0});

    SeededRng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = random_vec(rng, 16);
        // pure rescaling up to float rounding of the stored output
        CHECK(angle_degrees(x, rms_standardize(x, 0.0)) <= 1e-4);
        // output norm law: sqrt(d)*|x| / sqrt(|x|^2 + d*eps)
        const double eps = 1e-5;
        const double nx = l2_norm(std::span<const float>(x));
        const double want = std::sqrt(16.0) * nx / std::sqrt(nx * nx + 16.0 * eps);
        CHECK(l2_norm(std::span<const float>(rms_standardize(x, eps))) ==
              doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("scale_shift") {
    NormParams p = NormParams::identity(NormKind::LayerNorm, 2);
    p.gain = Vec{2, 2};
    p.bias = Vec{0.5f, 0.5f};
    CHECK(scale_shift(Vec{1, -1}, p) == Vec{2.5f, -1.5f});

    const auto id = NormParams::identity(NormKind::LayerNorm, 3);
    CHECK(scale_shift(Vec{0.25f, -7, 2}, id) == Vec{0.25f, -7, 2});

    NormParams b = NormParams::identity(NormKind::LayerNorm, 2);
    b.gain = Vec{42, -3};
    b.bias = Vec{1.5f, -2.5f};
    CHECK(scale_shift(Vec{0, 0}, b) == Vec{1.5f, -2.5f});

    CHECK_THROWS_AS(scale_shift(Vec{1, 2, 3}, b), DimensionError);
}

TEST_CASE("shift, scale, idempotence invariants") {
    SeededRng rng(61);
    for (int d : {8, 64}) {
        for (int trial = 0; trial < 100; ++trial) {
            const auto x = random_vec(rng, d);
            const auto y = standardize_procedural(x, 0.0);
            for (double c : {-10.0, 0.01, 3.0}) {
                Vec shifted = x;
                for (auto& v : shifted) v = static_cast<float>(v + c);
                CHECK(rel_vec_diff(standardize_procedural(shifted, 0.0), y) <= 1e-5);
            }
            for (double c : {0.01, 3.0}) {
                Vec scaled = x;
                for (auto& v : scaled) v = static_cast<float>(v * c);
                CHECK(rel_vec_diff(standardize_procedural(scaled, 0.0), y) <= 1e-5);
            }
            CHECK(rel_vec_diff(standardize_procedural(y, 0.0), y) <= 1e-5);

            // with eps > 0 the norms differ but the direction is preserved
            // (up to float rounding of the stored outputs)
            Vec quad = x;
            for (auto& v : quad) v *= 4.0f;
            CHECK(angle_degrees(standardize_procedural(quad, 1e-5),
                                standardize_procedural(x, 1e-5)) <= 1e-5);
        }
    }
}

TEST_CASE("RMSNorm is not shift invariant") {
    SeededRng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = random_vec(rng, 64);
        Vec shifted = x;
        for (auto& v : shifted) v += 10.0f;
        CHECK(rel_vec_diff(rms_standardize(shifted, 0.0), rms_standardize(x, 0.0)) >= 1e-2);
    }
}

TEST_CASE("LayerNorm collides distinct inputs") {
    const auto ya = standardize_procedural(Vec{1, 3}, 0.0);
    const auto yb = standardize_procedural(Vec{0, 4}, 0.0);
    CHECK(max_abs_diff(ya, yb) <= 1e-6);
    CHECK(Vec{1, 3} != Vec{0, 4});
}

TEST_CASE("batchnorm_fit") {
    const std::vector<Vec> batch{{1, 2}, {3, 4}, {5, 6}};
    const auto stats = batchnorm_fit(batch);
    CHECK(stats.mean[0] == doctest::Approx(3.0));
    CHECK(stats.mean[1] == doctest::Approx(4.0));
    CHECK(stats.variance[0] == doctest::Approx(8.0 / 3.0));
    CHECK(stats.variance[1] == doctest::Approx(8.0 / 3.0));

    const std::vector<Vec> constant{{2, 7}, {2, 7}, {2, 7}};
    const auto cstats = batchnorm_fit(constant);
    CHECK(cstats.variance[0] == doctest::Approx(0.0));
    CHECK(cstats.variance[1] == doctest::Approx(0.0));

    const auto one_dim = batchnorm_fit({{1}, {3}});
    CHECK(one_dim.mean[0] == doctest::Approx(2.0));
    CHECK(one_dim.variance[0] == doctest::Approx(1.0));

    CHECK_THROWS_AS(batchnorm_fit({{1, 2}}), InsufficientBatchError);
    CHECK_THROWS_AS(batchnorm_fit({{1, 2}, {1, 2, 3}}), DimensionError);
}

TEST_CASE("recovery probe: BatchNorm inverts exactly") {
    const std::vector<Vec> batch{{1, 2}, {3, 4}, {5, 6}};
    const auto report = recovery_probe(batch, RecoveryKind::BatchNorm);
    CHECK(report.rmse <= 1e-6);
    const auto stats = batchnorm_fit(batch);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(report.alpha[i] - std::sqrt(double(stats.variance[i]))) <= 1e-6);
        CHECK(std::abs(report.beta[i] - stats.mean[i]) <= 1e-6);
    }
}

TEST_CASE("recovery probe: LayerNorm collision defeats recovery") {
    const auto two = recovery_probe({{1, 3}, {0, 4}}, RecoveryKind::LayerNorm);
    CHECK(two.rmse > 0.4);

    const auto three = recovery_probe({{1, 3}, {0, 4}, {3, 1}}, RecoveryKind::LayerNorm);
    CHECK(three.rmse > 0.3);
}

TEST_CASE("recovery probe: LayerNorm rmse can be zero for solvable systems") {
    // two vectors with distinct per-dimension standardized values: two points
    // per dimension, a line fits them exactly
    const auto report = recovery_probe({{1, 3}, {10, 2}}, RecoveryKind::LayerNorm);
    CHECK(report.rmse <= 1e-9);
}

TEST_CASE("recovery probe: BatchNorm reversible whenever variances are positive") {
    SeededRng rng(81);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Vec> batch;
        const int b = 3 + static_cast<int>(rng.below(6));
        for (int j = 0; j < b; ++j) batch.push_back(random_vec(rng, 12, 2.0));
        const auto stats = batchnorm_fit(batch);
        bool positive = true;
        for (float v : stats.variance) positive = positive && v > 1e-6f;
        if (!positive) continue;
        CHECK(recovery_probe(batch, RecoveryKind::BatchNorm).rmse <= 1e-6);
    }
}

TEST_CASE("uniform basis has unit norm") {
    for (int d : {1, 2, 64, 4096}) {
        const UniformBasis basis(d);
        CHECK(std::abs(l2_norm(std::span<const float>(basis.unit)) - 1.0) <= 1e-6);
    }
}
