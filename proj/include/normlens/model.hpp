#pragma once

// A small deterministic decoder-only transformer over a byte vocabulary.
// Per layer: f = LN1(h); a = Att(f); g = LN2(h + a); m = MLP(g); h' = h + a + m,
// with pre-norm LN1/LN2 selectable between LayerNorm and RMSNorm and no final
// norm before the unembedding. Weights are 32-bit floats in a single arena;
// all forward/backward math runs in double.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "normlens/normalize.hpp"
#include "normlens/parallel.hpp"
#include "normlens/tap.hpp"

namespace normlens {

struct ModelConfig {
    int dim = 64;
    int n_layers = 6;
    int n_heads = 4;
    int ffn_mult = 4;
    int vocab_size = 256; // byte-level
    int context_len = 128;
    NormKind norm_kind = NormKind::LayerNorm;
    float epsilon = 1e-5f;
    std::uint64_t seed = 0;

    int head_dim() const { return dim / n_heads; }
    int ffn_dim() const { return dim * ffn_mult; }
    void validate() const; // throws DimensionError on inconsistent sizes
};

enum class ParamInit { Matrix, One, Zero };

// Contiguous view into the parameter arena. rows x cols gives the matrix
// shape in storage order (output-major); vectors have cols == 1.
struct ParamSlice {
    std::string name;
    std::size_t offset = 0; // in floats
    std::size_t rows = 0;
    std::size_t cols = 1;
    ParamInit init = ParamInit::Matrix;
    std::size_t count() const { return rows * cols; }
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    // GPT-style init: every weight matrix ~ N(0, 0.02), gains 1, biases 0,
    // drawn in arena order from SeededRng(cfg.seed).
    void init_weights();

    const ModelConfig& config() const { return cfg_; }
    std::span<float> params() { return params_; }
    std::span<const float> params() const { return params_; }
    const std::vector<ParamSlice>& layout() const { return layout_; }
    const ParamSlice& slice(const std::string& name) const; // throws FormatError

    std::span<float> slice_data(const ParamSlice& s) {
        return {params_.data() + s.offset, s.count()};
    }
    std::span<const float> slice_data(const ParamSlice& s) const {
        return {params_.data() + s.offset, s.count()};
    }

private:
    ModelConfig cfg_;
    std::vector<float> params_;
    std::vector<ParamSlice> layout_;
};

// Optional instrumentation for structural tests.
struct ForwardDebug {
    bool want_attention = false;      // collect softmax rows
    bool want_residual_terms = false; // collect h0 and per-layer a, m, h

    // [layer] -> n_heads*T*T softmax probabilities (query-major)
    std::vector<std::vector<double>> attention;
    std::vector<double> h0;                      // T*dim
    std::vector<std::vector<double>> attn_out;   // [layer] -> T*dim
    std::vector<std::vector<double>> mlp_out;    // [layer] -> T*dim
    std::vector<std::vector<double>> h_layers;   // [layer] -> T*dim
};

// Runs the model over one token window. Returns logits, row-major T x vocab.
// Emits the seven tap points per (layer, token) into `taps` when given;
// token_index of emitted records is token_base + position.
std::vector<double> forward_full(const Model& model, std::span<const std::uint8_t> tokens,
                                 TapSink* taps = nullptr, std::uint64_t token_base = 0,
                                 ForwardDebug* debug = nullptr, Exec mode = Exec::Parallel);

// Mean next-token cross-entropy of the window; targets[t] scored at position t.
double model_loss(const Model& model, std::span<const std::uint8_t> inputs,
                  std::span<const std::uint8_t> targets, Exec mode = Exec::Parallel);

// Same loss plus analytic gradients for every parameter, accumulated into
// `grads` (zeroed first; same layout as the arena).
double model_loss_grad(const Model& model, std::span<const std::uint8_t> inputs,
                       std::span<const std::uint8_t> targets, std::span<double> grads,
                       Exec mode = Exec::Parallel);

struct TrainOptions {
    int steps = 500;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Exec mode = Exec::Parallel;
};

struct TrainState {
    int step = 0;
    double learning_rate = 0.0;
    double loss_ema = 0.0;
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per step
    double first_loss = 0.0;
    double final_loss = 0.0;
};

// Next-byte training with Adam on random corpus windows. Fully deterministic
// per (config.seed, corpus, options). `on_step` is called after every step.
TrainResult train_model(Model& model, std::span<const std::uint8_t> corpus,
                        const TrainOptions& options,
                        const std::function<void(const TrainState&)>& on_step = {});

} // namespace normlens
