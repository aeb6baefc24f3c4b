// Benchmarks the OpenMP kernels against their serial reference and verifies
// that both produce identical bits before timing them.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "normlens/aggregate.hpp"
#include "normlens/kernels.hpp"
#include "normlens/model.hpp"
#include "normlens/rng.hpp"

using namespace normlens;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class F>
double time_best_ms(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-28s serial %9.2f ms   omp %9.2f ms   speedup %5.2fx   %s\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

VectorBatch random_batch(std::int64_t rows, int dim, std::uint64_t seed) {
    VectorBatch b(rows, dim);
    SeededRng rng(seed);
    for (auto& v : b.data) v = static_cast<float>(rng.normal());
    return b;
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n\n", omp_get_max_threads());
#else
    std::printf("OpenMP not available; both columns run the serial path\n\n");
#endif

    const std::int64_t rows = 16384;
    const int dim = 1024;
    const auto batch = random_batch(rows, dim, 42);
    VectorBatch out_s(rows, dim), out_p(rows, dim);

    {
        const double ts = time_best_ms(5, [&] { standardize_rows(batch, out_s, 1e-5, Exec::Serial); });
        const double tp = time_best_ms(5, [&] { standardize_rows(batch, out_p, 1e-5, Exec::Parallel); });
        report("standardize_rows", ts, tp, out_s.data == out_p.data);
    }
    {
        const double ts = time_best_ms(5, [&] { rms_standardize_rows(batch, out_s, 1e-5, Exec::Serial); });
        const double tp = time_best_ms(5, [&] { rms_standardize_rows(batch, out_p, 1e-5, Exec::Parallel); });
        report("rms_standardize_rows", ts, tp, out_s.data == out_p.data);
    }
    {
        std::vector<double> ns, np;
        const double ts = time_best_ms(5, [&] { row_angles_to_uniform(batch, ns, Exec::Serial); });
        const double tp = time_best_ms(5, [&] { row_angles_to_uniform(batch, np, Exec::Parallel); });
        report("row_angles_to_uniform", ts, tp, std::memcmp(ns.data(), np.data(),
                                                            ns.size() * sizeof(double)) == 0);
    }

    // sharded aggregation vs a single pass
    {
        std::vector<TapRecord> records;
        SeededRng rng(7);
        records.reserve(40000);
        for (int i = 0; i < 40000; ++i) {
            TapRecord r;
            r.layer = static_cast<std::uint16_t>(i % 6);
            r.tap = static_cast<TapPoint>(i % kTapCount);
            r.token_index = static_cast<std::uint64_t>(i / (6 * kTapCount));
            r.vector.resize(256);
            for (auto& v : r.vector) v = static_cast<float>(rng.normal());
            records.push_back(std::move(r));
        }
        Aggregator a1(256), a4(256);
        const double ts =
            time_best_ms(3, [&] { a1 = aggregate_sharded(records, 256, 1, Exec::Serial); });
        const double tp =
            time_best_ms(3, [&] { a4 = aggregate_sharded(records, 256, 4, Exec::Parallel); });
        double drift = 0.0;
        for (const auto& [key, cell] : a1.cells()) {
            const auto& other = a4.cells().at(key);
            drift = std::max(drift, std::abs(cell.norm.mean - other.norm.mean));
            drift = std::max(drift, std::abs(cell.angle_uniform.mean - other.angle_uniform.mean));
        }
        report("aggregate (4 shards)", ts, tp, drift < 1e-9);
    }

    // toy model forward
    {
        ModelConfig cfg;
        cfg.seed = 3;
        Model model(cfg);
        model.init_weights();
        SeededRng rng(3);
        std::vector<std::uint8_t> tokens(static_cast<std::size_t>(cfg.context_len));
        for (auto& t : tokens) t = static_cast<std::uint8_t>(rng.below(256));
        std::vector<double> ls, lp;
        const double ts =
            time_best_ms(3, [&] { ls = forward_full(model, tokens, nullptr, 0, nullptr, Exec::Serial); });
        const double tp =
            time_best_ms(3, [&] { lp = forward_full(model, tokens, nullptr, 0, nullptr, Exec::Parallel); });
        report("model forward (d=64,L=6)", ts, tp,
               std::memcmp(ls.data(), lp.data(), ls.size() * sizeof(double)) == 0);
    }

    return 0;
}
