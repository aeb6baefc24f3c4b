#include "normlens/model.hpp"

#include <cmath>
#include <cstring>

#include "normlens/errors.hpp"
#include "normlens/rng.hpp"

namespace normlens {

void ModelConfig::validate() const {
    if (dim < 1 || n_layers < 1 || n_heads < 1 || ffn_mult < 1 || vocab_size < 1 ||
        context_len < 1) {
        throw DimensionError("ModelConfig: all sizes must be >= 1");
    }
    if (dim % n_heads != 0) {
        throw DimensionError("ModelConfig: dim must be divisible by n_heads");
    }
    if (epsilon <= 0.0f) {
        throw DimensionError("ModelConfig: epsilon must be positive");
    }
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.dim);
    const auto ffn = static_cast<std::size_t>(cfg_.ffn_dim());
    const auto vocab = static_cast<std::size_t>(cfg_.vocab_size);
    const auto ctx = static_cast<std::size_t>(cfg_.context_len);
    const bool ln_bias = cfg_.norm_kind == NormKind::LayerNorm;

    std::size_t cursor = 0;
    auto add = [&](const std::string& name, std::size_t rows, std::size_t cols, ParamInit init) {
        layout_.push_back({name, cursor, rows, cols, init});
        cursor += rows * cols;
    };

    add("wte", vocab, d, ParamInit::Matrix);
    add("wpe", ctx, d, ParamInit::Matrix);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "l" + std::to_string(l) + ".";
        add(p + "wq", d, d, ParamInit::Matrix);
        add(p + "wk", d, d, ParamInit::Matrix);
        add(p + "wv", d, d, ParamInit::Matrix);
        add(p + "wo", d, d, ParamInit::Matrix);
        add(p + "w_fc", ffn, d, ParamInit::Matrix);
        add(p + "b_fc", ffn, 1, ParamInit::Zero);
        add(p + "w_proj", d, ffn, ParamInit::Matrix);
        add(p + "b_proj", d, 1, ParamInit::Zero);
        add(p + "ln1_gain", d, 1, ParamInit::One);
        if (ln_bias) add(p + "ln1_bias", d, 1, ParamInit::Zero);
        add(p + "ln2_gain", d, 1, ParamInit::One);
        if (ln_bias) add(p + "ln2_bias", d, 1, ParamInit::Zero);
    }
    add("lm_head", vocab, d, ParamInit::Matrix);

    params_.assign(cursor, 0.0f);
}

void Model::init_weights() {
    SeededRng rng(cfg_.seed);
    for (const auto& s : layout_) {
        float* p = params_.data() + s.offset;
        switch (s.init) {
            case ParamInit::Matrix:
                for (std::size_t i = 0; i < s.count(); ++i) {
                    p[i] = static_cast<float>(rng.normal() * 0.02);
                }
                break;
            case ParamInit::One:
                for (std::size_t i = 0; i < s.count(); ++i) p[i] = 1.0f;
                break;
            case ParamInit::Zero:
                for (std::size_t i = 0; i < s.count(); ++i) p[i] = 0.0f;
                break;
        }
    }
}

const ParamSlice& Model::slice(const std::string& name) const {
    for (const auto& s : layout_) {
        if (s.name == name) return s;
    }
    throw FormatError("Model: no parameter slice named " + name);
}

namespace {

double gelu(double x) {
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    constexpr double c = 0.7978845608028654;
    const double x2 = x * x;
    const double u = c * (x + 0.044715 * x * x2);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x2);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// Standardization on doubles; returns the effective denominator s (0 for a
// degenerate row, in which case y is zeroed).
double std_row(NormKind kind, const double* x, double* y, int d, double eps) {
    double mu = 0.0;
    if (kind == NormKind::LayerNorm) {
        double sum = 0.0;
        for (int i = 0; i < d; ++i) sum += x[i];
        mu = sum / d;
    }
    double sq = 0.0;
    for (int i = 0; i < d; ++i) {
        const double c = x[i] - mu;
        sq += c * c;
    }
    const double s = std::sqrt(sq / d + eps);
    if (s == 0.0) {
        for (int i = 0; i < d; ++i) y[i] = 0.0;
        return 0.0;
    }
    const double inv = 1.0 / s;
    for (int i = 0; i < d; ++i) y[i] = (x[i] - mu) * inv;
    return s;
}

// dL/dx for y = std_row(x) given dL/dy, reusing y and s from the forward.
void std_row_backward(NormKind kind, const double* dy, const double* y, double s, double* dx,
                      int d) {
    if (s == 0.0) {
        for (int i = 0; i < d; ++i) dx[i] = 0.0;
        return;
    }
    const double inv = 1.0 / s;
    if (kind == NormKind::LayerNorm) {
        double mean_dy = 0.0, mean_dyy = 0.0;
        for (int i = 0; i < d; ++i) {
            mean_dy += dy[i];
            mean_dyy += dy[i] * y[i];
        }
        mean_dy /= d;
        mean_dyy /= d;
        for (int i = 0; i < d; ++i) {
            dx[i] = inv * (dy[i] - mean_dy - y[i] * mean_dyy);
        }
    } else {
        double dot_dyy = 0.0;
        for (int i = 0; i < d; ++i) dot_dyy += dy[i] * y[i];
        dot_dyy /= d;
        for (int i = 0; i < d; ++i) {
            dx[i] = inv * (dy[i] - y[i] * dot_dyy);
        }
    }
}

using Buf = std::vector<double>;

struct LayerRefs {
    const float* wq;
    const float* wk;
    const float* wv;
    const float* wo;
    const float* w_fc;
    const float* b_fc;
    const float* w_proj;
    const float* b_proj;
    const float* ln1_gain;
    const float* ln1_bias; // nullptr for RMSNorm
    const float* ln2_gain;
    const float* ln2_bias;
};

struct Workspace {
    int T = 0;
    std::vector<Buf> h_in, y1, f, q, k, v, attn, ctx, a, gpre, y2, g, u, act, m;
    std::vector<Buf> s1, s2; // per-token denominators
    Buf h_final;
    Buf logits;
};

struct Runner {
    const Model& model;
    const ModelConfig& cfg;
    Exec mode;
    int d, H, hd, ffn, V;
    double inv_sqrt_hd;
    std::vector<LayerRefs> layers;
    const float* wte;
    const float* wpe;
    const float* lm_head;
    Workspace ws;

    Runner(const Model& mdl, Exec exec) : model(mdl), cfg(mdl.config()), mode(exec) {
        d = cfg.dim;
        H = cfg.n_heads;
        hd = cfg.head_dim();
        ffn = cfg.ffn_dim();
        V = cfg.vocab_size;
        inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
        const bool ln_bias = cfg.norm_kind == NormKind::LayerNorm;
        auto ptr = [&](const std::string& name) {
            return model.params().data() + model.slice(name).offset;
        };
        wte = ptr("wte");
        wpe = ptr("wpe");
        lm_head = ptr("lm_head");
        layers.resize(static_cast<std::size_t>(cfg.n_layers));
        for (int l = 0; l < cfg.n_layers; ++l) {
            const std::string p = "l" + std::to_string(l) + ".";
            auto& r = layers[static_cast<std::size_t>(l)];
            r.wq = ptr(p + "wq");
            r.wk = ptr(p + "wk");
            r.wv = ptr(p + "wv");
            r.wo = ptr(p + "wo");
            r.w_fc = ptr(p + "w_fc");
            r.b_fc = ptr(p + "b_fc");
            r.w_proj = ptr(p + "w_proj");
            r.b_proj = ptr(p + "b_proj");
            r.ln1_gain = ptr(p + "ln1_gain");
            r.ln1_bias = ln_bias ? ptr(p + "ln1_bias") : nullptr;
            r.ln2_gain = ptr(p + "ln2_gain");
            r.ln2_bias = ln_bias ? ptr(p + "ln2_bias") : nullptr;
        }
    }

    void alloc(int T) {
        ws.T = T;
        const auto L = static_cast<std::size_t>(cfg.n_layers);
        const auto td = static_cast<std::size_t>(T) * static_cast<std::size_t>(d);
        const auto tffn = static_cast<std::size_t>(T) * static_cast<std::size_t>(ffn);
        const auto patt = static_cast<std::size_t>(H) * T * T;
        auto sized = [&](std::vector<Buf>& bufs, std::size_t n) {
            bufs.assign(L, Buf(n, 0.0));
        };
        sized(ws.h_in, td);
        sized(ws.y1, td);
        sized(ws.f, td);
        sized(ws.q, td);
        sized(ws.k, td);
        sized(ws.v, td);
        sized(ws.attn, patt);
        sized(ws.ctx, td);
        sized(ws.a, td);
        sized(ws.gpre, td);
        sized(ws.y2, td);
        sized(ws.g, td);
        sized(ws.u, tffn);
        sized(ws.act, tffn);
        sized(ws.m, td);
        sized(ws.s1, static_cast<std::size_t>(T));
        sized(ws.s2, static_cast<std::size_t>(T));
        ws.h_final.assign(td, 0.0);
        ws.logits.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(V), 0.0);
    }

    // y[t] = M x[t] (+ bias), M stored out-major rows x cols.
    void matmul_rows(const float* M, const float* bias, const Buf& x, Buf& y, int T, int out,
                     int in) const {
        for_each_index(T, mode, [&](std::int64_t t) {
            const double* xt = x.data() + t * in;
            double* yt = y.data() + t * out;
            for (int o = 0; o < out; ++o) {
                const float* row = M + static_cast<std::size_t>(o) * in;
                double acc = bias ? static_cast<double>(bias[o]) : 0.0;
                for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * xt[i];
                yt[o] = acc;
            }
        });
    }

    void emit_taps(TapSink* taps, std::uint16_t layer, TapPoint tap, std::uint64_t base,
                   const Buf& buf, int T) const {
        if (!taps) return;
        for (int t = 0; t < T; ++t) {
            taps->emit(layer, tap, base + static_cast<std::uint64_t>(t),
                       std::span<const double>(buf.data() + static_cast<std::size_t>(t) * d,
                                               static_cast<std::size_t>(d)));
        }
    }

    void forward(std::span<const std::uint8_t> tokens, TapSink* taps, std::uint64_t base,
                 ForwardDebug* debug) {
        const int T = static_cast<int>(tokens.size());
        if (T > cfg.context_len) {
            throw ContextError("sequence length " + std::to_string(T) + " exceeds context_len " +
                               std::to_string(cfg.context_len));
        }
        alloc(T);
        const double eps = cfg.epsilon;

        // token + position embeddings
        Buf h(static_cast<std::size_t>(T) * d);
        for (int t = 0; t < T; ++t) {
            const float* te = wte + static_cast<std::size_t>(tokens[t]) * d;
            const float* pe = wpe + static_cast<std::size_t>(t) * d;
            double* ht = h.data() + static_cast<std::size_t>(t) * d;
            for (int i = 0; i < d; ++i) ht[i] = static_cast<double>(te[i]) + static_cast<double>(pe[i]);
        }
        if (debug && debug->want_residual_terms) {
            debug->h0 = h;
            debug->attn_out.assign(layers.size(), {});
            debug->mlp_out.assign(layers.size(), {});
            debug->h_layers.assign(layers.size(), {});
        }
        if (debug && debug->want_attention) debug->attention.assign(layers.size(), {});

        for (int l = 0; l < cfg.n_layers; ++l) {
            const auto li = static_cast<std::size_t>(l);
            const auto& w = layers[li];
            ws.h_in[li] = h;
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::PreLN1, base, h, T);

            // f = LN1(h)
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* xt = h.data() + t * d;
                double* yt = ws.y1[li].data() + t * d;
                ws.s1[li][static_cast<std::size_t>(t)] = std_row(cfg.norm_kind, xt, yt, d, eps);
                double* ft = ws.f[li].data() + t * d;
                for (int i = 0; i < d; ++i) {
                    ft[i] = static_cast<double>(w.ln1_gain[i]) * yt[i] +
                            (w.ln1_bias ? static_cast<double>(w.ln1_bias[i]) : 0.0);
                }
            });
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::PostLN1Std, base, ws.y1[li], T);
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::PostLN1, base, ws.f[li], T);

            // a = Att(f): causal multi-head scaled dot-product
            matmul_rows(w.wq, nullptr, ws.f[li], ws.q[li], T, d, d);
            matmul_rows(w.wk, nullptr, ws.f[li], ws.k[li], T, d, d);
            matmul_rows(w.wv, nullptr, ws.f[li], ws.v[li], T, d, d);
            for_each_index(static_cast<std::int64_t>(H) * T, mode, [&](std::int64_t idx) {
                const int head = static_cast<int>(idx / T);
                const int t = static_cast<int>(idx % T);
                const int off = head * hd;
                const double* qt = ws.q[li].data() + static_cast<std::size_t>(t) * d + off;
                double* p = ws.attn[li].data() +
                            (static_cast<std::size_t>(head) * T + static_cast<std::size_t>(t)) * T;
                double maxv = -1e300;
                for (int u = 0; u <= t; ++u) {
                    const double* ku = ws.k[li].data() + static_cast<std::size_t>(u) * d + off;
                    double sc = 0.0;
                    for (int j = 0; j < hd; ++j) sc += qt[j] * ku[j];
                    p[u] = sc * inv_sqrt_hd;
                    if (p[u] > maxv) maxv = p[u];
                }
                double z = 0.0;
                for (int u = 0; u <= t; ++u) {
                    p[u] = std::exp(p[u] - maxv);
                    z += p[u];
                }
                const double invz = 1.0 / z;
                for (int u = 0; u <= t; ++u) p[u] *= invz;
                for (int u = t + 1; u < T; ++u) p[u] = 0.0;
                double* ct = ws.ctx[li].data() + static_cast<std::size_t>(t) * d + off;
                for (int j = 0; j < hd; ++j) ct[j] = 0.0;
                for (int u = 0; u <= t; ++u) {
                    const double* vu = ws.v[li].data() + static_cast<std::size_t>(u) * d + off;
                    const double pu = p[u];
                    for (int j = 0; j < hd; ++j) ct[j] += pu * vu[j];
                }
            });
            matmul_rows(w.wo, nullptr, ws.ctx[li], ws.a[li], T, d, d);

            // g = LN2(h + a)
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* ht = h.data() + t * d;
                const double* at = ws.a[li].data() + t * d;
                double* gp = ws.gpre[li].data() + t * d;
                for (int i = 0; i < d; ++i) gp[i] = ht[i] + at[i];
                double* yt = ws.y2[li].data() + t * d;
                ws.s2[li][static_cast<std::size_t>(t)] = std_row(cfg.norm_kind, gp, yt, d, eps);
                double* gt = ws.g[li].data() + t * d;
                for (int i = 0; i < d; ++i) {
                    gt[i] = static_cast<double>(w.ln2_gain[i]) * yt[i] +
                            (w.ln2_bias ? static_cast<double>(w.ln2_bias[i]) : 0.0);
                }
            });
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::PreLN2, base, ws.gpre[li], T);
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::PostLN2Std, base, ws.y2[li], T);
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::PostLN2, base, ws.g[li], T);

            // m = W_proj gelu(W_fc g + b_fc) + b_proj
            matmul_rows(w.w_fc, w.b_fc, ws.g[li], ws.u[li], T, ffn, d);
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* ut = ws.u[li].data() + t * ffn;
                double* at = ws.act[li].data() + t * ffn;
                for (int j = 0; j < ffn; ++j) at[j] = gelu(ut[j]);
            });
            matmul_rows(w.w_proj, w.b_proj, ws.act[li], ws.m[li], T, d, ffn);

            // h' = h + a + m
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* gp = ws.gpre[li].data() + t * d;
                const double* mt = ws.m[li].data() + t * d;
                double* ht = h.data() + t * d;
                for (int i = 0; i < d; ++i) ht[i] = gp[i] + mt[i];
            });
            emit_taps(taps, static_cast<std::uint16_t>(l), TapPoint::ResidualOut, base, h, T);

            if (debug && debug->want_attention) debug->attention[li] = ws.attn[li];
            if (debug && debug->want_residual_terms) {
                debug->attn_out[li] = ws.a[li];
                debug->mlp_out[li] = ws.m[li];
                debug->h_layers[li] = h;
            }
        }

        ws.h_final = h;
        matmul_rows(lm_head, nullptr, ws.h_final, ws.logits, T, V, d);
    }

    double loss(std::span<const std::uint8_t> targets, Buf* dlogits) const {
        const int T = ws.T;
        double total = 0.0;
        if (dlogits) dlogits->assign(static_cast<std::size_t>(T) * V, 0.0);
        for (int t = 0; t < T; ++t) {
            const double* z = ws.logits.data() + static_cast<std::size_t>(t) * V;
            double maxv = z[0];
            for (int o = 1; o < V; ++o) maxv = std::max(maxv, z[o]);
            double sum = 0.0;
            for (int o = 0; o < V; ++o) sum += std::exp(z[o] - maxv);
            const double lse = std::log(sum) + maxv;
            total += lse - z[targets[static_cast<std::size_t>(t)]];
            if (dlogits) {
                double* dz = dlogits->data() + static_cast<std::size_t>(t) * V;
                const double inv = 1.0 / (sum * T);
                for (int o = 0; o < V; ++o) dz[o] = std::exp(z[o] - maxv) * inv;
                dz[targets[static_cast<std::size_t>(t)]] -= 1.0 / T;
            }
        }
        return total / T;
    }

    // dW[o][:] += sum_t dy[t][o] * x[t][:], plus optional bias grad.
    void grad_matmul(std::span<double> grads, const ParamSlice& wslice, const ParamSlice* bslice,
                     const Buf& dy, const Buf& x, int T, int out, int in) const {
        double* dW = grads.data() + wslice.offset;
        for_each_index(out, mode, [&](std::int64_t o) {
            double* row = dW + static_cast<std::size_t>(o) * in;
            for (int t = 0; t < T; ++t) {
                const double dyo = dy[static_cast<std::size_t>(t) * out + static_cast<std::size_t>(o)];
                const double* xt = x.data() + static_cast<std::size_t>(t) * in;
                for (int i = 0; i < in; ++i) row[i] += dyo * xt[i];
            }
        });
        if (bslice) {
            double* db = grads.data() + bslice->offset;
            for_each_index(out, mode, [&](std::int64_t o) {
                double acc = 0.0;
                for (int t = 0; t < T; ++t) {
                    acc += dy[static_cast<std::size_t>(t) * out + static_cast<std::size_t>(o)];
                }
                db[o] += acc;
            });
        }
    }

    // dx[t][:] = M^T dy[t][:]
    void grad_input(const float* M, const Buf& dy, Buf& dx, int T, int out, int in) const {
        for_each_index(T, mode, [&](std::int64_t t) {
            const double* dyt = dy.data() + t * out;
            double* dxt = dx.data() + t * in;
            for (int i = 0; i < in; ++i) dxt[i] = 0.0;
            for (int o = 0; o < out; ++o) {
                const float* row = M + static_cast<std::size_t>(o) * in;
                const double dyo = dyt[o];
                for (int i = 0; i < in; ++i) dxt[i] += static_cast<double>(row[i]) * dyo;
            }
        });
    }

    void backward(std::span<const std::uint8_t> tokens, const Buf& dlogits,
                  std::span<double> grads) {
        const int T = ws.T;
        const auto td = static_cast<std::size_t>(T) * d;
        const auto tffn = static_cast<std::size_t>(T) * ffn;

        // unembedding
        grad_matmul(grads, model.slice("lm_head"), nullptr, dlogits, ws.h_final, T, V, d);
        Buf dh(td);
        grad_input(lm_head, dlogits, dh, T, V, d);

        Buf dm(td), dact(tffn), du(tffn), dg(td), dy2(td), dgpre(td), da(td), dctx(td);
        Buf dq(td), dk(td), dv(td), df(td), dy1(td), dh_ln(td);

        for (int l = cfg.n_layers - 1; l >= 0; --l) {
            const auto li = static_cast<std::size_t>(l);
            const auto& w = layers[li];
            const std::string p = "l" + std::to_string(l) + ".";

            // h' = (h + a) + m
            dm = dh;

            // m = W_proj act + b_proj
            grad_matmul(grads, model.slice(p + "w_proj"), &model.slice(p + "b_proj"), dm,
                        ws.act[li], T, d, ffn);
            grad_input(w.w_proj, dm, dact, T, d, ffn);
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* ut = ws.u[li].data() + t * ffn;
                const double* dat = dact.data() + t * ffn;
                double* dut = du.data() + t * ffn;
                for (int j = 0; j < ffn; ++j) dut[j] = dat[j] * gelu_grad(ut[j]);
            });
            grad_matmul(grads, model.slice(p + "w_fc"), &model.slice(p + "b_fc"), du, ws.g[li], T,
                        ffn, d);
            grad_input(w.w_fc, du, dg, T, ffn, d);

            // LN2: g = gain * y2 (+ bias)
            {
                double* dgain = grads.data() + model.slice(p + "ln2_gain").offset;
                double* dbias = w.ln2_bias ? grads.data() + model.slice(p + "ln2_bias").offset
                                           : nullptr;
                for (int i = 0; i < d; ++i) {
                    double ga = 0.0, ba = 0.0;
                    for (int t = 0; t < T; ++t) {
                        const double dgi = dg[static_cast<std::size_t>(t) * d + i];
                        ga += dgi * ws.y2[li][static_cast<std::size_t>(t) * d + i];
                        ba += dgi;
                    }
                    dgain[i] += ga;
                    if (dbias) dbias[i] += ba;
                }
            }
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* dgt = dg.data() + t * d;
                double* dyt = dy2.data() + t * d;
                for (int i = 0; i < d; ++i) dyt[i] = static_cast<double>(w.ln2_gain[i]) * dgt[i];
                std_row_backward(cfg.norm_kind, dyt, ws.y2[li].data() + t * d,
                                 ws.s2[li][static_cast<std::size_t>(t)], dgpre.data() + t * d, d);
            });
            // dgpre collects the residual branch too: h' = gpre + m
            for (std::size_t i = 0; i < td; ++i) dgpre[i] += dh[i];

            // gpre = h + a
            da = dgpre;

            // a = Wo ctx
            grad_matmul(grads, model.slice(p + "wo"), nullptr, da, ws.ctx[li], T, d, d);
            grad_input(w.wo, da, dctx, T, d, d);

            // attention backward; heads own disjoint slices of dq/dk/dv
            std::fill(dq.begin(), dq.end(), 0.0);
            std::fill(dk.begin(), dk.end(), 0.0);
            std::fill(dv.begin(), dv.end(), 0.0);
            for_each_index(H, mode, [&](std::int64_t head) {
                const int off = static_cast<int>(head) * hd;
                std::vector<double> dp(static_cast<std::size_t>(T));
                for (int t = 0; t < T; ++t) {
                    const double* probs =
                        ws.attn[li].data() +
                        (static_cast<std::size_t>(head) * T + static_cast<std::size_t>(t)) * T;
                    const double* dct = dctx.data() + static_cast<std::size_t>(t) * d + off;
                    double psum = 0.0;
                    for (int u = 0; u <= t; ++u) {
                        const double* vu = ws.v[li].data() + static_cast<std::size_t>(u) * d + off;
                        double* dvu = dv.data() + static_cast<std::size_t>(u) * d + off;
                        double acc = 0.0;
                        const double pu = probs[u];
                        for (int j = 0; j < hd; ++j) {
                            dvu[j] += pu * dct[j];
                            acc += dct[j] * vu[j];
                        }
                        dp[static_cast<std::size_t>(u)] = acc;
                        psum += pu * acc;
                    }
                    const double* qt = ws.q[li].data() + static_cast<std::size_t>(t) * d + off;
                    double* dqt = dq.data() + static_cast<std::size_t>(t) * d + off;
                    for (int u = 0; u <= t; ++u) {
                        const double ds = probs[u] * (dp[static_cast<std::size_t>(u)] - psum) *
                                          inv_sqrt_hd;
                        const double* ku = ws.k[li].data() + static_cast<std::size_t>(u) * d + off;
                        double* dku = dk.data() + static_cast<std::size_t>(u) * d + off;
                        for (int j = 0; j < hd; ++j) {
                            dqt[j] += ds * ku[j];
                            dku[j] += ds * qt[j];
                        }
                    }
                }
            });

            grad_matmul(grads, model.slice(p + "wq"), nullptr, dq, ws.f[li], T, d, d);
            grad_matmul(grads, model.slice(p + "wk"), nullptr, dk, ws.f[li], T, d, d);
            grad_matmul(grads, model.slice(p + "wv"), nullptr, dv, ws.f[li], T, d, d);
            for_each_index(T, mode, [&](std::int64_t t) {
                double* dft = df.data() + t * d;
                for (int i = 0; i < d; ++i) dft[i] = 0.0;
                auto accum = [&](const float* M, const Buf& dyv) {
                    const double* dyt = dyv.data() + t * d;
                    for (int o = 0; o < d; ++o) {
                        const float* row = M + static_cast<std::size_t>(o) * d;
                        const double dyo = dyt[o];
                        for (int i = 0; i < d; ++i) dft[i] += static_cast<double>(row[i]) * dyo;
                    }
                };
                accum(w.wq, dq);
                accum(w.wk, dk);
                accum(w.wv, dv);
            });

            // LN1: f = gain * y1 (+ bias)
            {
                double* dgain = grads.data() + model.slice(p + "ln1_gain").offset;
                double* dbias = w.ln1_bias ? grads.data() + model.slice(p + "ln1_bias").offset
                                           : nullptr;
                for (int i = 0; i < d; ++i) {
                    double ga = 0.0, ba = 0.0;
                    for (int t = 0; t < T; ++t) {
                        const double dfi = df[static_cast<std::size_t>(t) * d + i];
                        ga += dfi * ws.y1[li][static_cast<std::size_t>(t) * d + i];
                        ba += dfi;
                    }
                    dgain[i] += ga;
                    if (dbias) dbias[i] += ba;
                }
            }
            for_each_index(T, mode, [&](std::int64_t t) {
                const double* dft = df.data() + t * d;
                double* dyt = dy1.data() + t * d;
                for (int i = 0; i < d; ++i) dyt[i] = static_cast<double>(w.ln1_gain[i]) * dft[i];
                std_row_backward(cfg.norm_kind, dyt, ws.y1[li].data() + t * d,
                                 ws.s1[li][static_cast<std::size_t>(t)], dh_ln.data() + t * d, d);
            });

            // dh for the layer below: residual path + LN1 path
            for (std::size_t i = 0; i < td; ++i) dh[i] = dgpre[i] + dh_ln[i];
        }

        // embeddings
        double* dwte = grads.data() + model.slice("wte").offset;
        double* dwpe = grads.data() + model.slice("wpe").offset;
        for (int t = 0; t < T; ++t) {
            const double* dht = dh.data() + static_cast<std::size_t>(t) * d;
            double* te = dwte + static_cast<std::size_t>(tokens[t]) * d;
            double* pe = dwpe + static_cast<std::size_t>(t) * d;
            for (int i = 0; i < d; ++i) {
                te[i] += dht[i];
                pe[i] += dht[i];
            }
        }
    }
};

} // namespace

std::vector<double> forward_full(const Model& model, std::span<const std::uint8_t> tokens,
                                 TapSink* taps, std::uint64_t token_base, ForwardDebug* debug,
                                 Exec mode) {
    if (tokens.empty()) return {};
    Runner r(model, mode);
    r.forward(tokens, taps, token_base, debug);
    return std::move(r.ws.logits);
}

double model_loss(const Model& model, std::span<const std::uint8_t> inputs,
                  std::span<const std::uint8_t> targets, Exec mode) {
    if (inputs.size() != targets.size()) throw DimensionError("model_loss: inputs/targets size mismatch");
    if (inputs.empty()) throw DimensionError("model_loss: empty window");
    Runner r(model, mode);
    r.forward(inputs, nullptr, 0, nullptr);
    return r.loss(targets, nullptr);
}

double model_loss_grad(const Model& model, std::span<const std::uint8_t> inputs,
                       std::span<const std::uint8_t> targets, std::span<double> grads,
                       Exec mode) {
    if (inputs.size() != targets.size()) throw DimensionError("model_loss_grad: inputs/targets size mismatch");
    if (inputs.empty()) throw DimensionError("model_loss_grad: empty window");
    if (grads.size() != model.params().size()) throw DimensionError("model_loss_grad: bad grad arena size");
    std::fill(grads.begin(), grads.end(), 0.0);
    Runner r(model, mode);
    r.forward(inputs, nullptr, 0, nullptr);
    Buf dlogits;
    const double loss = r.loss(targets, &dlogits);
    r.backward(inputs, dlogits, grads);
    return loss;
}

TrainResult train_model(Model& model, std::span<const std::uint8_t> corpus,
                        const TrainOptions& options,
                        const std::function<void(const TrainState&)>& on_step) {
    const auto& cfg = model.config();
    const std::size_t need = 10u * static_cast<std::size_t>(cfg.context_len);
    if (corpus.size() < need) {
        throw CorpusError("corpus too small: need at least " + std::to_string(need) + " bytes, got " +
                          std::to_string(corpus.size()));
    }
    const int T = cfg.context_len;
    SeededRng windows(cfg.seed ^ 0x747261696eULL); // decoupled from the init stream

    std::vector<double> grads(model.params().size(), 0.0);
    std::vector<double> adam_m(model.params().size(), 0.0);
    std::vector<double> adam_v(model.params().size(), 0.0);

    TrainResult result;
    TrainState state;
    for (int step = 0; step < options.steps; ++step) {
        const std::uint64_t start =
            windows.below(static_cast<std::uint64_t>(corpus.size()) - static_cast<std::uint64_t>(T));
        auto inputs = corpus.subspan(start, static_cast<std::size_t>(T));
        auto targets = corpus.subspan(start + 1, static_cast<std::size_t>(T));

        const double loss = model_loss_grad(model, inputs, targets, grads, options.mode);

        const int t = step + 1;
        const double bc1 = 1.0 - std::pow(options.beta1, t);
        const double bc2 = 1.0 - std::pow(options.beta2, t);
        float* params = model.params().data();
        const double lr = options.learning_rate;
        for_each_index(static_cast<std::int64_t>(grads.size()), options.mode, [&](std::int64_t i) {
            const double g = grads[static_cast<std::size_t>(i)];
            double& m = adam_m[static_cast<std::size_t>(i)];
            double& v = adam_v[static_cast<std::size_t>(i)];
            m = options.beta1 * m + (1.0 - options.beta1) * g;
            v = options.beta2 * v + (1.0 - options.beta2) * g * g;
            const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + options.adam_epsilon);
            params[i] = static_cast<float>(static_cast<double>(params[i]) - update);
        });

        result.loss_trace.push_back(loss);
        state.step = step;
        state.learning_rate = lr;
        state.loss_ema = step == 0 ? loss : 0.98 * state.loss_ema + 0.02 * loss;
        if (on_step) on_step(state);
    }
    if (!result.loss_trace.empty()) {
        result.first_loss = result.loss_trace.front();
        result.final_loss = result.loss_trace.back();
    }
    return result;
}

} // namespace normlens
