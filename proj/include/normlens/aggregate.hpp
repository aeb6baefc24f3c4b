#pragma once

// Streaming aggregation of tap records keyed by (layer, tap): L2-norm moments,
// angle-to-uniform moments plus a 0.5-degree histogram, and rotation-angle
// moments for post-normalization taps paired with their pre tap by
// (layer, token_index). Aggregators built over shards merge into exactly the
// same statistics as a single pass (modulo float merge order, < 1e-9).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "normlens/moments.hpp"
#include "normlens/parallel.hpp"
#include "normlens/tap.hpp"

namespace normlens {

inline constexpr int kAngleBins = 360;       // 0.5 degree bins over [0, 180]
inline constexpr double kAngleBinWidth = 0.5;

struct AngleHistogram {
    std::array<std::uint64_t, kAngleBins> counts{};

    void add(double degrees) {
        int bin = static_cast<int>(degrees / kAngleBinWidth);
        if (bin < 0) bin = 0;
        if (bin >= kAngleBins) bin = kAngleBins - 1;
        ++counts[static_cast<std::size_t>(bin)];
    }
    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
};

struct TapKey {
    int layer = 0;
    TapPoint tap = TapPoint::PreLN1;
    auto operator<=>(const TapKey&) const = default;
};

struct TapAggregate {
    StreamingMoments norm;          // every record
    StreamingMoments angle_uniform; // zero-norm records skipped
    AngleHistogram histogram;
    std::uint64_t skipped = 0;      // zero-norm records (angle undefined)
    StreamingMoments rotation;      // post taps only: angle(pre, post)
    std::uint64_t rotation_skipped = 0;
};

// Which pre tap a post tap pairs with for rotation statistics.
std::optional<TapPoint> rotation_pre_tap(TapPoint tap);

class Aggregator final : public TapSink {
public:
    explicit Aggregator(int dim);

    void emit(const TapRecord& record) override; // FormatError on dim mismatch
    using TapSink::emit;

    void merge(const Aggregator& other);

    const std::map<TapKey, TapAggregate>& cells() const { return cells_; }
    int dim() const { return dim_; }
    std::uint64_t total_records() const { return total_; }

private:
    struct Pending {
        Vec pre;
        bool has_pre = false;
        int posts_done = 0;
        std::vector<std::pair<TapPoint, Vec>> waiting_posts;
    };
    using PendingKey = std::tuple<int, int, std::uint64_t>; // layer, pair group, token

    void rotate(const TapKey& post_key, const Vec& pre, const Vec& post);
    void settle(const PendingKey& key, Pending& entry);

    int dim_ = 0;
    std::uint64_t total_ = 0;
    std::map<TapKey, TapAggregate> cells_;
    std::map<PendingKey, Pending> pending_;
};

// Single pass over a record vector.
Aggregator aggregate_records(const std::vector<TapRecord>& records, int dim);

// Splits the records into `shards` contiguous ranges, aggregates each
// (optionally in parallel), and merges in shard order.
Aggregator aggregate_sharded(const std::vector<TapRecord>& records, int dim, int shards,
                             Exec mode);

} // namespace normlens
