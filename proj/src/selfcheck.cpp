#include "normlens/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "normlens/moments.hpp"
#include "normlens/normalize.hpp"
#include "normlens/rng.hpp"

namespace normlens {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

Vec random_vec(SeededRng& rng, int d, double scale = 1.0) {
    Vec v(static_cast<std::size_t>(d));
    for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
    return v;
}

double rel_diff(std::span<const float> a, std::span<const float> b) {
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        num += d * d;
        da += static_cast<double>(a[i]) * a[i];
        db += static_cast<double>(b[i]) * b[i];
    }
    const double denom = std::max(std::sqrt(std::max(da, db)), 1e-12);
    return std::sqrt(num) / denom;
}

CheckResult check_uniform_norm() {
    double worst = 0.0;
    for (int d = 1; d <= 4096; ++d) {
        const auto u = uniform_vector(d);
        const double want = std::sqrt(static_cast<double>(d));
        worst = std::max(worst, std::abs(l2_norm(u) - want) / want);
    }
    return {"uniform-norm", worst <= 1e-12, "max rel err " + fmt(worst)};
}

CheckResult check_equivalence(SeededRng& rng) {
    double worst_ratio = 0.0;
    for (int d : {2, 8, 64, 1024}) {
        const double bound = 1e-5 * std::sqrt(static_cast<double>(d));
        for (int n = 0; n < 2000; ++n) {
            const auto x = random_vec(rng, d);
            for (double eps : {0.0, 1e-5}) {
                const auto a = standardize_procedural(x, eps);
                const auto b = standardize_geometric(x, eps);
                double maxdiff = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) {
                    maxdiff = std::max(maxdiff, std::abs(double(a[i]) - double(b[i])));
                }
                worst_ratio = std::max(worst_ratio, maxdiff / bound);
            }
        }
    }
    return {"geo-proc-equivalence", worst_ratio <= 1.0,
            "worst diff at " + fmt(worst_ratio * 100) + "% of bound"};
}

CheckResult check_norm_law(SeededRng& rng, double epsilon) {
    double worst_lo = 1.0, worst_hi = 1.0;
    for (int d : {8, 64, 1024}) {
        const double sqrtd = std::sqrt(static_cast<double>(d));
        for (int n = 0; n < 500; ++n) {
            const auto x = random_vec(rng, d);
            if (decompose(x).perp_norm < 1.0) continue;
            const double nrm = l2_norm(std::span<const float>(standardize_procedural(x, epsilon)));
            worst_lo = std::min(worst_lo, nrm / sqrtd);
            worst_hi = std::max(worst_hi, nrm / sqrtd);
        }
    }
    const bool pass = worst_lo >= 1.0 - 1e-3 && worst_hi <= 1.0 + 1e-12;
    return {"norm-law", pass,
            "norm/sqrt(d) in [" + fmt(worst_lo) + ", " + fmt(worst_hi) + "]"};
}

CheckResult check_orthogonality(SeededRng& rng) {
    double worst = 0.0;
    for (int d : {2, 8, 64, 1024}) {
        const auto ones = uniform_vector(d);
        for (int n = 0; n < 500; ++n) {
            const auto y = standardize_procedural(random_vec(rng, d), 1e-5);
            worst = std::max(worst, std::abs(dot(y, ones)) / d);
        }
    }
    return {"orthogonality", worst <= 1e-4, "max |dot(y,1)|/d = " + fmt(worst)};
}

CheckResult check_shift_invariance(SeededRng& rng) {
    double worst = 0.0;
    for (int d : {8, 64}) {
        for (int n = 0; n < 200; ++n) {
            const auto x = random_vec(rng, d);
            const auto y = standardize_procedural(x, 0.0);
            for (double c : {-10.0, 0.01, 3.0}) {
                Vec shifted = x;
                for (auto& v : shifted) v = static_cast<float>(v + c);
                worst = std::max(worst, rel_diff(standardize_procedural(shifted, 0.0), y));
            }
        }
    }
    return {"shift-invariance", worst <= 1e-5, "max rel diff " + fmt(worst)};
}

CheckResult check_scale_invariance(SeededRng& rng) {
    double worst = 0.0;
    for (int d : {8, 64}) {
        for (int n = 0; n < 200; ++n) {
            const auto x = random_vec(rng, d);
            const auto y = standardize_procedural(x, 0.0);
            for (double c : {0.01, 3.0}) {
                Vec scaled = x;
                for (auto& v : scaled) v = static_cast<float>(v * c);
                worst = std::max(worst, rel_diff(standardize_procedural(scaled, 0.0), y));
            }
            // negative scale flips the sign of the output
            Vec neg = x;
            for (auto& v : neg) v = static_cast<float>(v * -10.0);
            Vec flipped = standardize_procedural(neg, 0.0);
            for (auto& v : flipped) v = -v;
            worst = std::max(worst, rel_diff(flipped, y));
        }
    }
    return {"scale-invariance", worst <= 1e-5, "max rel diff " + fmt(worst)};
}

CheckResult check_idempotence(SeededRng& rng) {
    double worst = 0.0;
    for (int d : {8, 64}) {
        for (int n = 0; n < 200; ++n) {
            const auto y = standardize_procedural(random_vec(rng, d), 0.0);
            worst = std::max(worst, rel_diff(standardize_procedural(y, 0.0), y));
        }
    }
    return {"idempotence", worst <= 1e-5, "max rel diff " + fmt(worst)};
}

CheckResult check_collision() {
    const Vec a{1.0f, 3.0f};
    const Vec b{0.0f, 4.0f};
    const auto ya = standardize_procedural(a, 0.0);
    const auto yb = standardize_procedural(b, 0.0);
    double maxdiff = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
        maxdiff = std::max(maxdiff, std::abs(double(ya[i]) - double(yb[i])));
    }
    const bool pass = maxdiff <= 1e-6;
    return {"collision", pass, "[1,3] vs [0,4] image diff " + fmt(maxdiff)};
}

CheckResult check_rms_shift(SeededRng& rng) {
    double worst = 1e300;
    for (int n = 0; n < 50; ++n) {
        const auto x = random_vec(rng, 64);
        Vec shifted = x;
        for (auto& v : shifted) v += 10.0f;
        worst = std::min(worst, rel_diff(rms_standardize(shifted, 0.0), rms_standardize(x, 0.0)));
    }
    return {"rms-shift-sensitivity", worst >= 1e-2,
            "min rel change under +10 shift " + fmt(worst)};
}

CheckResult check_batchnorm_recovery(SeededRng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> batch;
        for (int j = 0; j < 8; ++j) batch.push_back(random_vec(rng, 16, 2.0));
        const auto stats = batchnorm_fit(batch);
        bool ok = true;
        for (float v : stats.variance) ok = ok && v > 1e-6f;
        if (!ok) continue;
        worst = std::max(worst, recovery_probe(batch, RecoveryKind::BatchNorm).rmse);
    }
    return {"batchnorm-recovery", worst <= 1e-6, "max rmse " + fmt(worst)};
}

CheckResult check_welford_merge(SeededRng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> samples(1000);
        for (auto& s : samples) s = rng.normal() * 3.0 + 1.0;
        StreamingMoments whole;
        for (double s : samples) whole.update(s);
        const std::size_t cut = 1 + rng.below(samples.size() - 1);
        StreamingMoments a, b;
        for (std::size_t i = 0; i < cut; ++i) a.update(samples[i]);
        for (std::size_t i = cut; i < samples.size(); ++i) b.update(samples[i]);
        const auto merged = StreamingMoments::merged(a, b);
        worst = std::max(worst, std::abs(merged.mean - whole.mean) / std::abs(whole.mean));
        worst = std::max(worst,
                         std::abs(merged.variance() - whole.variance()) / whole.variance());
    }
    return {"welford-merge", worst <= 1e-9, "max rel err " + fmt(worst)};
}

CheckResult check_rng_determinism(std::uint64_t seed) {
    SeededRng a(seed), b(seed), c(seed + 1);
    bool same = true, differs = false;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a.next_u64();
        same = same && va == b.next_u64();
        differs = differs || va != c.next_u64();
    }
    return {"rng-determinism", same && differs, same ? "streams reproducible" : "streams diverged"};
}

CheckResult check_residual_identity(std::uint64_t seed) {
    double worst = 0.0;
    for (NormKind kind : {NormKind::LayerNorm, NormKind::RMSNorm}) {
        ModelConfig cfg;
        cfg.dim = 64;
        cfg.n_layers = 4;
        cfg.context_len = 32;
        cfg.norm_kind = kind;
        cfg.seed = seed;
        Model model(cfg);
        model.init_weights();
        SeededRng rng(seed + 7);
        std::vector<std::uint8_t> tokens(32);
        for (auto& t : tokens) t = static_cast<std::uint8_t>(rng.below(256));

        ForwardDebug dbg;
        dbg.want_residual_terms = true;
        forward_full(model, tokens, nullptr, 0, &dbg, Exec::Serial);

        const std::size_t n = dbg.h0.size();
        std::vector<double> acc = dbg.h0;
        for (int l = 0; l < cfg.n_layers; ++l) {
            for (std::size_t i = 0; i < n; ++i) {
                acc[i] += dbg.attn_out[static_cast<std::size_t>(l)][i] +
                          dbg.mlp_out[static_cast<std::size_t>(l)][i];
            }
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = acc[i] - dbg.h_layers[static_cast<std::size_t>(l)][i];
                num += d * d;
                den += dbg.h_layers[static_cast<std::size_t>(l)][i] *
                       dbg.h_layers[static_cast<std::size_t>(l)][i];
            }
            worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
        }
    }
    return {"residual-identity", worst <= 1e-4, "max rel err " + fmt(worst)};
}

CheckResult check_attention_rows(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.dim = 32;
    cfg.n_layers = 2;
    cfg.context_len = 16;
    cfg.seed = seed;
    Model model(cfg);
    model.init_weights();
    SeededRng rng(seed + 11);
    std::vector<std::uint8_t> tokens(16);
    for (auto& t : tokens) t = static_cast<std::uint8_t>(rng.below(256));

    ForwardDebug dbg;
    dbg.want_attention = true;
    forward_full(model, tokens, nullptr, 0, &dbg, Exec::Serial);

    const int T = static_cast<int>(tokens.size());
    double worst = 0.0;
    for (const auto& layer : dbg.attention) {
        for (int h = 0; h < cfg.n_heads; ++h) {
            for (int t = 0; t < T; ++t) {
                double sum = 0.0;
                for (int u = 0; u < T; ++u) {
                    sum += layer[(static_cast<std::size_t>(h) * T + t) * T + u];
                }
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        }
    }
    return {"attention-rows", worst <= 1e-5, "max |row sum - 1| = " + fmt(worst)};
}

CheckResult check_causality(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.dim = 32;
    cfg.n_layers = 2;
    cfg.context_len = 16;
    cfg.seed = seed;
    Model model(cfg);
    model.init_weights();
    SeededRng rng(seed + 13);
    std::vector<std::uint8_t> tokens(16);
    for (auto& t : tokens) t = static_cast<std::uint8_t>(rng.below(256));

    const auto logits = forward_full(model, tokens, nullptr, 0, nullptr, Exec::Serial);
    auto mutated = tokens;
    for (std::size_t t = 10; t < mutated.size(); ++t) {
        mutated[t] = static_cast<std::uint8_t>(mutated[t] + 1);
    }
    const auto logits2 = forward_full(model, mutated, nullptr, 0, nullptr, Exec::Serial);

    double worst = 0.0;
    const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
    for (std::size_t t = 0; t < 10; ++t) {
        for (std::size_t o = 0; o < v; ++o) {
            worst = std::max(worst, std::abs(logits[t * v + o] - logits2[t * v + o]));
        }
    }
    return {"causality", worst <= 1e-12, "max logit drift before edit " + fmt(worst)};
}

CheckResult check_gradients(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.context_len = 16;
    cfg.seed = seed;
    const double err = gradient_check_max_rel_err(cfg, 8, seed, 12);
    return {"gradient-check", err <= 1e-2, "max rel err " + fmt(err)};
}

} // namespace

double gradient_check_max_rel_err(const ModelConfig& cfg, int n_params, std::uint64_t seed,
                                  int window_len) {
    Model model(cfg);
    model.init_weights();
    SeededRng rng(seed + 17);
    std::vector<std::uint8_t> window(static_cast<std::size_t>(window_len) + 1);
    for (auto& t : window) t = static_cast<std::uint8_t>(rng.below(256));
    const std::span<const std::uint8_t> inputs(window.data(), window.size() - 1);
    const std::span<const std::uint8_t> targets(window.data() + 1, window.size() - 1);

    std::vector<double> grads(model.params().size());
    model_loss_grad(model, inputs, targets, grads, Exec::Serial);

    std::set<std::size_t> picked;
    while (picked.size() < static_cast<std::size_t>(n_params)) {
        picked.insert(rng.below(model.params().size()));
    }

    double worst = 0.0;
    const double h = 1e-3;
    for (std::size_t idx : picked) {
        float& w = model.params()[idx];
        const float w0 = w;
        const float wplus = static_cast<float>(static_cast<double>(w0) + h);
        const float wminus = static_cast<float>(static_cast<double>(w0) - h);
        w = wplus;
        const double lp = model_loss(model, inputs, targets, Exec::Serial);
        w = wminus;
        const double lm = model_loss(model, inputs, targets, Exec::Serial);
        w = w0;
        const double step = static_cast<double>(wplus) - static_cast<double>(wminus);
        const double fd = (lp - lm) / step;
        const double an = grads[idx];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        worst = std::max(worst, rel);
    }
    return worst;
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options) {
    SeededRng rng(options.seed ^ 0x5e1fc3ecULL);
    std::vector<CheckResult> results;
    results.push_back(check_uniform_norm());
    results.push_back(check_equivalence(rng));
    results.push_back(check_norm_law(rng, options.norm_law_epsilon));
    results.push_back(check_orthogonality(rng));
    results.push_back(check_shift_invariance(rng));
    results.push_back(check_scale_invariance(rng));
    results.push_back(check_idempotence(rng));
    results.push_back(check_collision());
    results.push_back(check_rms_shift(rng));
    results.push_back(check_batchnorm_recovery(rng));
    results.push_back(check_welford_merge(rng));
    results.push_back(check_rng_determinism(options.seed));
    results.push_back(check_residual_identity(options.seed));
    results.push_back(check_attention_rows(options.seed));
    results.push_back(check_causality(options.seed));
    results.push_back(check_gradients(options.seed));
    return results;
}

} // namespace normlens
