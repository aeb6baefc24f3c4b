#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "normlens/checkpoint.hpp"
#include "normlens/corpus.hpp"
#include "normlens/errors.hpp"
#include "normlens/model.hpp"
#include "normlens/rng.hpp"
#include "normlens/selfcheck.hpp"

using namespace normlens;

namespace {

struct CollectSink final : TapSink {
    std::vector<TapRecord> records;
    void emit(const TapRecord& r) override { records.push_back(r); }
};

std::vector<std::uint8_t> random_tokens(int n, std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<std::uint8_t> t(static_cast<std::size_t>(n));
    for (auto& x : t) x = static_cast<std::uint8_t>(rng.below(256));
    return t;
}

ModelConfig small_config(NormKind kind = NormKind::LayerNorm) {
    ModelConfig cfg;
    cfg.dim = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.context_len = 24;
    cfg.norm_kind = kind;
    cfg.seed = 5;
    return cfg;
}

const TapRecord& find_record(const std::vector<TapRecord>& records, int layer, TapPoint tap,
                             std::uint64_t token) {
    for (const auto& r : records) {
        if (r.layer == layer && r.tap == tap && r.token_index == token) return r;
    }
    throw std::runtime_error("tap record not found");
}

} // namespace

TEST_CASE("config validation") {
    ModelConfig bad;
    bad.dim = 30;
    bad.n_heads = 4;
    CHECK_THROWS_AS(Model{bad}, DimensionError);
    ModelConfig neg;
    neg.n_layers = 0;
    CHECK_THROWS_AS(Model{neg}, DimensionError);
}

TEST_CASE("zero weights leave the residual stream untouched") {
    Model model(small_config());
    // arena starts zeroed; gains, biases and matrices all zero
    const auto tokens = random_tokens(8, 3);
    ForwardDebug dbg;
    dbg.want_residual_terms = true;
    forward_full(model, tokens, nullptr, 0, &dbg, Exec::Serial);
    for (const auto& h : dbg.h_layers) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            CHECK(h[i] == doctest::Approx(dbg.h0[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("per-layer tap identities") {
    Model model(small_config());
    model.init_weights();
    const auto tokens = random_tokens(10, 17);

    CollectSink sink;
    ForwardDebug dbg;
    dbg.want_residual_terms = true;
    forward_full(model, tokens, &sink, 100, &dbg, Exec::Serial);

    const auto& cfg = model.config();
    CHECK(sink.records.size() ==
          static_cast<std::size_t>(kTapCount) * cfg.n_layers * tokens.size());

    const int d = cfg.dim;
    for (int l = 0; l < cfg.n_layers; ++l) {
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const auto& pre1 = find_record(sink.records, l, TapPoint::PreLN1, 100 + t);
            const auto& pre2 = find_record(sink.records, l, TapPoint::PreLN2, 100 + t);
            const auto& res = find_record(sink.records, l, TapPoint::ResidualOut, 100 + t);
            const double* a = dbg.attn_out[static_cast<std::size_t>(l)].data() + t * d;
            const double* m = dbg.mlp_out[static_cast<std::size_t>(l)].data() + t * d;
            for (int i = 0; i < d; ++i) {
                // PreLN2 = PreLN1 + attention output
                CHECK(std::abs(pre2.vector[i] - (pre1.vector[i] + a[i])) <= 1e-5);
                // ResidualOut = PreLN1 + a + m
                CHECK(std::abs(res.vector[i] - (pre1.vector[i] + a[i] + m[i])) <= 1e-5);
            }
        }
    }
}

TEST_CASE("single-token attention reduces to the value projection path") {
    Model model(small_config());
    model.init_weights();
    const std::vector<std::uint8_t> tokens{42};

    CollectSink sink;
    ForwardDebug dbg;
    dbg.want_residual_terms = true;
    forward_full(model, tokens, &sink, 0, &dbg, Exec::Serial);

    const int d = model.config().dim;
    const auto& f = find_record(sink.records, 0, TapPoint::PostLN1, 0).vector;
    const auto wv = model.slice_data(model.slice("l0.wv"));
    const auto wo = model.slice_data(model.slice("l0.wo"));
    std::vector<double> v(static_cast<std::size_t>(d), 0.0);
    for (int o = 0; o < d; ++o) {
        for (int i = 0; i < d; ++i) {
            v[static_cast<std::size_t>(o)] +=
                static_cast<double>(wv[static_cast<std::size_t>(o) * d + i]) * f[i];
        }
    }
    for (int o = 0; o < d; ++o) {
        double want = 0.0;
        for (int i = 0; i < d; ++i) {
            want += static_cast<double>(wo[static_cast<std::size_t>(o) * d + i]) * v[i];
        }
        CHECK(dbg.attn_out[0][static_cast<std::size_t>(o)] ==
              doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("residual stream identity holds for a random 4-layer model") {
    for (NormKind kind : {NormKind::LayerNorm, NormKind::RMSNorm}) {
        ModelConfig cfg;
        cfg.dim = 64;
        cfg.n_layers = 4;
        cfg.context_len = 32;
        cfg.norm_kind = kind;
        cfg.seed = 9;
        Model model(cfg);
        model.init_weights();
        const auto tokens = random_tokens(32, 23);

        ForwardDebug dbg;
        dbg.want_residual_terms = true;
        forward_full(model, tokens, nullptr, 0, &dbg, Exec::Parallel);

        std::vector<double> acc = dbg.h0;
        for (int l = 0; l < cfg.n_layers; ++l) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < acc.size(); ++i) {
                acc[i] += dbg.attn_out[static_cast<std::size_t>(l)][i] +
                          dbg.mlp_out[static_cast<std::size_t>(l)][i];
            }
            for (std::size_t i = 0; i < acc.size(); ++i) {
                const double diff = acc[i] - dbg.h_layers[static_cast<std::size_t>(l)][i];
                num += diff * diff;
                den += dbg.h_layers[static_cast<std::size_t>(l)][i] *
                       dbg.h_layers[static_cast<std::size_t>(l)][i];
            }
            CHECK(std::sqrt(num) <= 1e-4 * std::sqrt(den));
        }
    }
}

TEST_CASE("forward is deterministic and mode-independent") {
    Model m1(small_config());
    m1.init_weights();
    Model m2(small_config());
    m2.init_weights();
    CHECK(std::equal(m1.params().begin(), m1.params().end(), m2.params().begin()));

    const auto tokens = random_tokens(24, 29);
    const auto serial = forward_full(m1, tokens, nullptr, 0, nullptr, Exec::Serial);
    const auto parallel = forward_full(m1, tokens, nullptr, 0, nullptr, Exec::Parallel);
    const auto again = forward_full(m2, tokens, nullptr, 0, nullptr, Exec::Parallel);
    CHECK(serial == parallel);
    CHECK(parallel == again);
}

TEST_CASE("attention rows are normalized and the model is causal") {
    Model model(small_config());
    model.init_weights();
    const auto tokens = random_tokens(16, 31);

    ForwardDebug dbg;
    dbg.want_attention = true;
    const auto logits = forward_full(model, tokens, nullptr, 0, &dbg, Exec::Serial);

    const int T = static_cast<int>(tokens.size());
    for (const auto& layer : dbg.attention) {
        for (int h = 0; h < model.config().n_heads; ++h) {
            for (int t = 0; t < T; ++t) {
                double sum = 0.0;
                for (int u = 0; u < T; ++u) {
                    sum += layer[(static_cast<std::size_t>(h) * T + t) * T + u];
                }
                CHECK(std::abs(sum - 1.0) <= 1e-5);
            }
        }
    }

    auto mutated = tokens;
    mutated.back() = static_cast<std::uint8_t>(mutated.back() ^ 0xff);
    mutated[mutated.size() - 2] = 0;
    const auto logits2 = forward_full(model, mutated, nullptr, 0, nullptr, Exec::Serial);
    const auto V = static_cast<std::size_t>(model.config().vocab_size);
    for (std::size_t t = 0; t + 2 < tokens.size(); ++t) {
        for (std::size_t o = 0; o < V; ++o) {
            CHECK(logits[t * V + o] == logits2[t * V + o]);
        }
    }
}

TEST_CASE("overlong sequences raise ContextError") {
    Model model(small_config());
    const auto tokens = random_tokens(model.config().context_len + 1, 37);
    CHECK_THROWS_AS(forward_full(model, tokens), ContextError);
}

TEST_CASE("analytic gradients match central finite differences") {
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.context_len = 16;
    cfg.seed = 12;
    for (NormKind kind : {NormKind::LayerNorm, NormKind::RMSNorm}) {
        cfg.norm_kind = kind;
        CHECK(gradient_check_max_rel_err(cfg, 20, 77, 16) <= 1e-2);
    }
}

TEST_CASE("training reduces the loss deterministically") {
    const std::string text = generate_corpus(30000, 99);
    const std::vector<std::uint8_t> corpus(text.begin(), text.end());

    ModelConfig cfg = small_config();
    cfg.context_len = 64;
    TrainOptions topt;
    topt.steps = 0;

    Model untouched(cfg);
    untouched.init_weights();
    const std::vector<float> before(untouched.params().begin(), untouched.params().end());
    train_model(untouched, corpus, topt);
    CHECK(std::equal(before.begin(), before.end(), untouched.params().begin()));

    topt.steps = 150;
    Model a(cfg), b(cfg);
    a.init_weights();
    b.init_weights();
    const auto ra = train_model(a, corpus, topt);
    const auto rb = train_model(b, corpus, topt);
    CHECK(ra.final_loss < ra.first_loss);
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));

    CHECK_THROWS_AS(train_model(a, std::vector<std::uint8_t>{}, topt), CorpusError);
    CHECK_THROWS_AS(train_model(a, std::vector<std::uint8_t>(100, 'x'), topt), CorpusError);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path() / "normlens_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    Model model(small_config());
    model.init_weights();
    save_checkpoint(model, path);
    const Model loaded = load_checkpoint(path);

    CHECK(loaded.config().dim == model.config().dim);
    CHECK(loaded.config().norm_kind == model.config().norm_kind);
    CHECK(loaded.config().seed == model.config().seed);
    REQUIRE(loaded.params().size() == model.params().size());
    CHECK(std::equal(model.params().begin(), model.params().end(), loaded.params().begin()));

    // saving the loaded model reproduces the file byte for byte
    const std::string path2 = (dir / "model2.ckpt").string();
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    std::filesystem::remove_all(dir);
}

TEST_CASE("RMSNorm checkpoints carry no normalization bias blobs") {
    Model ln(small_config(NormKind::LayerNorm));
    Model rms(small_config(NormKind::RMSNorm));
    bool ln_has_bias = false, rms_has_bias = false;
    for (const auto& s : ln.layout()) ln_has_bias |= s.name.find("ln1_bias") != std::string::npos;
    for (const auto& s : rms.layout()) rms_has_bias |= s.name.find("_bias") != std::string::npos &&
                                                       s.name.find("ln") != std::string::npos;
    CHECK(ln_has_bias);
    CHECK_FALSE(rms_has_bias);
    CHECK(rms.params().size() <
          ln.params().size()); // two d-sized bias vectors fewer per layer
}

TEST_CASE("corrupted checkpoints are rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "normlens_ckpt_bad";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    Model model(small_config());
    model.init_weights();
    save_checkpoint(model, path);

    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XLTM1", 5);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), IoError);

    std::filesystem::remove_all(dir);
}
