// normlens: normalization-geometry laboratory CLI.
//
// Subcommands: selfcheck, train, capture, analyze, demo, gencorpus.
// Option precedence everywhere: explicit flags > --config JSON file >
// NORMLENS_SEED environment variable > built-in defaults.
// Exit codes: 0 success, 1 invariant failure, 2 input/format error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "normlens/checkpoint.hpp"
#include "normlens/corpus.hpp"
#include "normlens/errors.hpp"
#include "normlens/hsd.hpp"
#include "normlens/pipeline.hpp"
#include "normlens/report.hpp"
#include "normlens/selfcheck.hpp"

using namespace normlens;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitInput = 2;

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("NORMLENS_SEED");
    if (!raw || !*raw) return std::nullopt;
    try {
        return std::stoull(raw);
    } catch (...) {
        throw FormatError("NORMLENS_SEED is not an integer");
    }
}

nlohmann::json load_config_file(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config file " + path + ": " + e.what());
    }
}

// flags > config file > env > default
template <typename T>
T resolve(const CLI::Option* opt, T flag_value, const nlohmann::json& file, const char* key,
          T fallback) {
    if (opt && opt->count() > 0) return flag_value;
    if (file.contains(key)) return file.at(key).get<T>();
    return fallback;
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value,
                           const nlohmann::json& file) {
    if (opt && opt->count() > 0) return flag_value;
    if (file.contains("seed")) return file.at("seed").get<std::uint64_t>();
    if (auto env = env_seed()) return *env;
    return 0;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::set<std::string> parse_formats(const std::string& csv) {
    std::set<std::string> formats;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) formats.insert(item);
    }
    if (formats.empty()) throw FormatError("no output formats given");
    return formats;
}

void print_vec(const char* label, std::span<const float> v) {
    std::printf("%-22s [", label);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::printf("%s%.6g", i ? ", " : "", static_cast<double>(v[i]));
    }
    std::printf("]\n");
}

// ---------------- selfcheck ----------------

int cmd_selfcheck(std::uint64_t seed, double debug_epsilon) {
    SelfcheckOptions options;
    options.seed = seed;
    if (debug_epsilon > 0.0) options.norm_law_epsilon = debug_epsilon;
    const auto results = run_selfcheck(options);
    int failed = 0;
    std::printf("%-24s %-6s %s\n", "check", "status", "detail");
    for (const auto& r : results) {
        if (!r.pass) ++failed;
        std::printf("%-24s %-6s %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.detail.c_str());
    }
    std::printf("RESULT selfcheck checks=%zu failed=%d\n", results.size(), failed);
    return failed == 0 ? kExitOk : kExitInvariant;
}

// ---------------- train ----------------

int cmd_train(const std::string& corpus_path, const std::string& out_path, ModelConfig cfg,
              TrainOptions topt) {
    const auto corpus = read_file_bytes(corpus_path);
    Model model(cfg);
    model.init_weights();

    const auto result = train_model(model, corpus, topt, [&](const TrainState& s) {
        if (s.step % 50 == 0) {
            std::printf("step %5d  lr %.2e  loss_ema %.4f\n", s.step, s.learning_rate,
                        s.loss_ema);
        }
    });
    save_checkpoint(model, out_path);
    std::printf("RESULT train steps=%d first_loss=%.6f final_loss=%.6f out=%s\n", topt.steps,
                result.first_loss, result.final_loss, out_path.c_str());
    return kExitOk;
}

// ---------------- capture ----------------

int cmd_capture(const std::string& model_path, const std::string& text_path,
                const std::string& hsd_out, std::uint64_t max_tokens,
                const std::string& report_dir, const std::string& formats_csv) {
    const Model model = load_checkpoint(model_path);
    const auto text = read_file_bytes(text_path);

    Aggregator aggregates(model.config().dim);
    CaptureStats stats{};
    if (!hsd_out.empty()) {
        std::vector<int> tap_codes;
        for (int i = 0; i < kTapCount; ++i) tap_codes.push_back(i);
        std::map<std::string, std::string> meta{
            {"model", model_path},
            {"corpus", text_path},
            {"seed", std::to_string(model.config().seed)},
            {"norm_kind", norm_kind_name(model.config().norm_kind)},
        };
        HsdWriter writer(hsd_out, model.config().dim, model.config().n_layers, tap_codes, meta);
        stats = run_capture(model, text, max_tokens, aggregates, &writer);
        writer.close();
    } else {
        stats = run_capture(model, text, max_tokens, aggregates, nullptr);
    }

    const Report report = build_report(aggregates);
    if (!report_dir.empty()) {
        const auto files = write_report_files(report, report_dir, parse_formats(formats_csv));
        for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
    }
    std::printf("RESULT capture tokens=%llu records=%llu rows=%zu hsd=%s\n",
                static_cast<unsigned long long>(stats.tokens),
                static_cast<unsigned long long>(stats.records), report.rows.size(),
                hsd_out.empty() ? "-" : hsd_out.c_str());
    return kExitOk;
}

// ---------------- analyze ----------------

void print_summary(const Aggregator& aggregates) {
    std::printf("%-12s %18s %18s %18s\n", "tap", "norm L2", "angle-to-1 (deg)",
                "rotation (deg)");
    for (const auto& s : cross_layer_summary(aggregates)) {
        char rot[40];
        if (s.rotation.count > 0) {
            std::snprintf(rot, sizeof(rot), "%9.2f +- %-6.2f", s.rotation.mean,
                          s.rotation.stddev());
        } else {
            std::snprintf(rot, sizeof(rot), "%9s", "-");
        }
        std::printf("%-12s %9.2f +- %-7.2f %9.2f +- %-6.2f %s\n", tap_name(s.tap), s.norm.mean,
                    s.norm.stddev(), s.angle_uniform.mean, s.angle_uniform.stddev(), rot);
    }
}

int cmd_analyze(const std::string& in_path, const std::string& out_dir,
                const std::string& formats_csv) {
    HsdReader reader(in_path);
    Aggregator aggregates(reader.header().dim);
    TapRecord record;
    while (reader.next(record)) aggregates.emit(record);

    const Report report = build_report(aggregates);
    print_summary(aggregates);
    const auto files = write_report_files(report, out_dir, parse_formats(formats_csv));
    for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
    std::printf("RESULT analyze records=%llu rows=%zu files=%zu out=%s\n",
                static_cast<unsigned long long>(aggregates.total_records()), report.rows.size(),
                files.size(), out_dir.c_str());
    return kExitOk;
}

// ---------------- demo ----------------

int cmd_demo(std::vector<float> input) {
    if (input.empty()) input = {3.0f, 1.0f, 2.0f};
    const int d = static_cast<int>(input.size());
    std::printf("LayerNorm standardization, step by step (d = %d)\n\n", d);
    print_vec("x", input);

    const auto dec = decompose(input);
    std::printf("%-22s %.6g\n", "mean mu", dec.mean_scalar);
    print_vec("mean vector mu*1", dec.mean_vector);
    std::printf("\nstep 1: drop the component along the uniform vector\n");
    print_vec("perp = x - mu*1", dec.perp);
    std::printf("%-22s %.6g\n", "|perp|", dec.perp_norm);

    if (dec.perp_norm == 0.0) {
        std::printf("\nall components equal: the standardized vector is all zeros\n");
        print_vec("y", Vec(static_cast<std::size_t>(d), 0.0f));
        std::printf("RESULT demo constant_input=1\n");
        return kExitOk;
    }

    std::printf("\nstep 2: normalize the remaining vector\n");
    Vec unitv(dec.perp);
    for (auto& v : unitv) v = static_cast<float>(v / dec.perp_norm);
    print_vec("perp/|perp|", unitv);

    std::printf("\nstep 3: scale by sqrt(d) = %.6g\n", std::sqrt(static_cast<double>(d)));
    const auto y = standardize_geometric(input, 0.0);
    print_vec("y", y);
    std::printf("%-22s %.6g (= sqrt(d))\n", "|y|", l2_norm(std::span<const float>(y)));
    std::printf("%-22s %.4f deg\n", "angle(y, 1)", angle_to_uniform_degrees(y));

    const auto params = NormParams::identity(NormKind::LayerNorm, d);
    const auto z = scale_shift(y, params);
    std::printf("\nscale-and-shift with alpha = 1, beta = 0 leaves y unchanged\n");
    print_vec("z", z);
    std::printf("RESULT demo constant_input=0\n");
    return kExitOk;
}

// ---------------- gencorpus ----------------

int cmd_gencorpus(std::size_t bytes, std::uint64_t seed, const std::string& out_path) {
    const std::string text = generate_corpus(bytes, seed);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write corpus: " + out_path);
    out << text;
    std::printf("RESULT gencorpus bytes=%zu out=%s\n", text.size(), out_path.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"normlens: LayerNorm/RMSNorm geometry laboratory"};
    app.require_subcommand(1);

    // selfcheck
    auto* sc = app.add_subcommand("selfcheck", "run the invariant suite");
    std::uint64_t sc_seed = 0;
    double sc_eps = 0.0;
    auto* sc_seed_opt = sc->add_option("--seed", sc_seed, "RNG seed");
    sc->add_option("--debug-epsilon", sc_eps,
                   "override the norm-law epsilon (debug; 1.0 makes the check fail)");

    // train
    auto* tr = app.add_subcommand("train", "train the toy model on a byte corpus");
    std::string tr_corpus, tr_out, tr_norm = "layernorm", tr_config;
    int tr_steps = 500, tr_dim = 64, tr_layers = 6, tr_heads = 4, tr_context = 128, tr_ffn = 4;
    double tr_lr = 1e-3, tr_eps = 1e-5;
    std::uint64_t tr_seed = 0;
    tr->add_option("--corpus", tr_corpus, "input text file")->required();
    tr->add_option("--out", tr_out, "output NLTM1 checkpoint")->required();
    tr->add_option("--config", tr_config, "JSON config file");
    auto* tr_norm_opt = tr->add_option("--norm", tr_norm, "layernorm|rmsnorm");
    auto* tr_steps_opt = tr->add_option("--steps", tr_steps, "training steps");
    auto* tr_dim_opt = tr->add_option("--dim", tr_dim, "model width");
    auto* tr_layers_opt = tr->add_option("--layers", tr_layers, "decoder layers");
    auto* tr_heads_opt = tr->add_option("--heads", tr_heads, "attention heads");
    auto* tr_context_opt = tr->add_option("--context", tr_context, "context length");
    auto* tr_ffn_opt = tr->add_option("--ffn-mult", tr_ffn, "MLP width multiplier");
    auto* tr_lr_opt = tr->add_option("--lr", tr_lr, "learning rate");
    auto* tr_eps_opt = tr->add_option("--epsilon", tr_eps, "normalization epsilon");
    auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "RNG seed");

    // capture
    auto* cp = app.add_subcommand("capture", "stream text through a model and aggregate taps");
    std::string cp_model, cp_text, cp_out, cp_report, cp_formats = "csv,json,svg";
    std::uint64_t cp_max_tokens = 0;
    bool cp_aggregate_only = false;
    cp->add_option("--model", cp_model, "NLTM1 checkpoint")->required();
    cp->add_option("--text", cp_text, "input text file")->required();
    auto* cp_out_opt = cp->add_option("--out", cp_out, "persist taps to this HSD file");
    auto* cp_agg_opt =
        cp->add_flag("--aggregate-only", cp_aggregate_only, "skip HSD persistence (default)");
    cp_out_opt->excludes(cp_agg_opt);
    cp->add_option("--max-tokens", cp_max_tokens, "limit tokens (0 = whole file)");
    cp->add_option("--report-dir", cp_report, "also write report files here");
    cp->add_option("--format", cp_formats, "report formats, comma separated");

    // analyze
    auto* an = app.add_subcommand("analyze", "build reports from an HSD dump");
    std::string an_in, an_out, an_formats = "csv,json,svg";
    an->add_option("--in", an_in, "HSD file")->required();
    an->add_option("--out", an_out, "output directory")->required();
    an->add_option("--format", an_formats, "report formats, comma separated");

    // demo
    auto* dm = app.add_subcommand("demo", "3-step decomposition walkthrough");
    std::string dm_vector;
    dm->add_option("--vector", dm_vector, "comma-separated components (default 3,1,2)");

    // gencorpus
    auto* gc = app.add_subcommand("gencorpus", "write a deterministic text corpus");
    std::size_t gc_bytes = 200000;
    std::string gc_out;
    std::uint64_t gc_seed = 0;
    gc->add_option("--bytes", gc_bytes, "minimum size in bytes");
    gc->add_option("--out", gc_out, "output file")->required();
    auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sc->parsed()) {
            return cmd_selfcheck(resolve_seed(sc_seed_opt, sc_seed, {}), sc_eps);
        }
        if (tr->parsed()) {
            const auto file = load_config_file(tr_config);
            ModelConfig cfg;
            cfg.dim = resolve(tr_dim_opt, tr_dim, file, "dim", 64);
            cfg.n_layers = resolve(tr_layers_opt, tr_layers, file, "n_layers", 6);
            cfg.n_heads = resolve(tr_heads_opt, tr_heads, file, "n_heads", 4);
            cfg.ffn_mult = resolve(tr_ffn_opt, tr_ffn, file, "ffn_mult", 4);
            cfg.context_len = resolve(tr_context_opt, tr_context, file, "context_len", 128);
            cfg.epsilon =
                static_cast<float>(resolve(tr_eps_opt, tr_eps, file, "epsilon", 1e-5));
            cfg.norm_kind = norm_kind_from_name(
                resolve(tr_norm_opt, tr_norm, file, "norm", std::string("layernorm")));
            cfg.seed = resolve_seed(tr_seed_opt, tr_seed, file);
            TrainOptions topt;
            topt.steps = resolve(tr_steps_opt, tr_steps, file, "steps", 500);
            topt.learning_rate = resolve(tr_lr_opt, tr_lr, file, "learning_rate", 1e-3);
            return cmd_train(tr_corpus, tr_out, cfg, topt);
        }
        if (cp->parsed()) {
            return cmd_capture(cp_model, cp_text, cp_out, cp_max_tokens, cp_report, cp_formats);
        }
        if (an->parsed()) {
            return cmd_analyze(an_in, an_out, an_formats);
        }
        if (dm->parsed()) {
            std::vector<float> v;
            if (!dm_vector.empty()) {
                std::stringstream ss(dm_vector);
                std::string item;
                while (std::getline(ss, item, ',')) v.push_back(std::stof(item));
            }
            return cmd_demo(v);
        }
        if (gc->parsed()) {
            return cmd_gencorpus(gc_bytes, resolve_seed(gc_seed_opt, gc_seed, {}), gc_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitOk;
}
