#include "normlens/aggregate.hpp"

#include <cmath>

#include "normlens/errors.hpp"
#include "normlens/vec_math.hpp"

namespace normlens {

std::optional<TapPoint> rotation_pre_tap(TapPoint tap) {
    switch (tap) {
        case TapPoint::PostLN1Std:
        case TapPoint::PostLN1:
            return TapPoint::PreLN1;
        case TapPoint::PostLN2Std:
        case TapPoint::PostLN2:
            return TapPoint::PreLN2;
        default:
            return std::nullopt;
    }
}

namespace {

// LN1 taps pair through group 0, LN2 taps through group 1.
std::optional<int> pair_group(TapPoint tap) {
    switch (tap) {
        case TapPoint::PreLN1:
        case TapPoint::PostLN1Std:
        case TapPoint::PostLN1:
            return 0;
        case TapPoint::PreLN2:
        case TapPoint::PostLN2Std:
        case TapPoint::PostLN2:
            return 1;
        default:
            return std::nullopt;
    }
}

bool is_pre(TapPoint tap) { return tap == TapPoint::PreLN1 || tap == TapPoint::PreLN2; }

} // namespace

Aggregator::Aggregator(int dim) : dim_(dim) {
    if (dim < 1) throw FormatError("Aggregator: dim must be >= 1");
}

void Aggregator::rotate(const TapKey& post_key, const Vec& pre, const Vec& post) {
    auto& cell = cells_[post_key];
    const double npre = l2_norm(std::span<const float>(pre));
    const double npost = l2_norm(std::span<const float>(post));
    if (npre == 0.0 || npost == 0.0) {
        ++cell.rotation_skipped;
        return;
    }
    cell.rotation.update(angle_degrees(pre, post));
}

void Aggregator::settle(const PendingKey& key, Pending& entry) {
    if (entry.has_pre && !entry.waiting_posts.empty()) {
        const int layer = std::get<0>(key);
        for (auto& [tap, vec] : entry.waiting_posts) {
            rotate(TapKey{layer, tap}, entry.pre, vec);
            ++entry.posts_done;
        }
        entry.waiting_posts.clear();
    }
}

void Aggregator::emit(const TapRecord& record) {
    if (static_cast<int>(record.vector.size()) != dim_) {
        throw FormatError("Aggregator: record dim " + std::to_string(record.vector.size()) +
                          " does not match " + std::to_string(dim_));
    }
    ++total_;
    const TapKey key{static_cast<int>(record.layer), record.tap};
    auto& cell = cells_[key];

    const double norm = l2_norm(std::span<const float>(record.vector));
    cell.norm.update(norm);
    if (norm == 0.0) {
        ++cell.skipped;
    } else {
        const double angle = angle_to_uniform_degrees(record.vector);
        cell.angle_uniform.update(angle);
        cell.histogram.add(angle);
    }

    // rotation pairing
    const auto group = pair_group(record.tap);
    if (!group) return;
    const PendingKey pkey{static_cast<int>(record.layer), *group, record.token_index};
    if (is_pre(record.tap)) {
        auto& entry = pending_[pkey];
        if (!entry.has_pre) {
            entry.pre = record.vector;
            entry.has_pre = true;
        }
        settle(pkey, entry);
        if (entry.posts_done >= 2) pending_.erase(pkey);
    } else {
        auto it = pending_.find(pkey);
        if (it != pending_.end() && it->second.has_pre) {
            rotate(key, it->second.pre, record.vector);
            if (++it->second.posts_done >= 2) pending_.erase(it);
        } else {
            pending_[pkey].waiting_posts.emplace_back(record.tap, record.vector);
        }
    }
}

void Aggregator::merge(const Aggregator& other) {
    if (other.dim_ != dim_) throw FormatError("Aggregator::merge: dim mismatch");
    total_ += other.total_;
    for (const auto& [key, cell] : other.cells_) {
        auto& mine = cells_[key];
        mine.norm.merge(cell.norm);
        mine.angle_uniform.merge(cell.angle_uniform);
        for (int i = 0; i < kAngleBins; ++i) {
            mine.histogram.counts[static_cast<std::size_t>(i)] +=
                cell.histogram.counts[static_cast<std::size_t>(i)];
        }
        mine.skipped += cell.skipped;
        mine.rotation.merge(cell.rotation);
        mine.rotation_skipped += cell.rotation_skipped;
    }
    // Unify pending pairs; shard boundaries can split a (pre, post) pair.
    for (const auto& [pkey, theirs] : other.pending_) {
        auto it = pending_.find(pkey);
        if (it == pending_.end()) {
            pending_[pkey] = theirs;
            continue;
        }
        auto& entry = it->second;
        if (!entry.has_pre && theirs.has_pre) {
            entry.pre = theirs.pre;
            entry.has_pre = true;
        }
        entry.posts_done += theirs.posts_done;
        for (const auto& wp : theirs.waiting_posts) entry.waiting_posts.push_back(wp);
        settle(pkey, entry);
        if (entry.has_pre && entry.posts_done >= 2) pending_.erase(it);
    }
}

Aggregator aggregate_records(const std::vector<TapRecord>& records, int dim) {
    Aggregator agg(dim);
    for (const auto& r : records) agg.emit(r);
    return agg;
}

Aggregator aggregate_sharded(const std::vector<TapRecord>& records, int dim, int shards,
                             Exec mode) {
    if (shards < 1) shards = 1;
    std::vector<Aggregator> parts(static_cast<std::size_t>(shards), Aggregator(dim));
    const std::size_t n = records.size();
    for_each_index(shards, mode, [&](std::int64_t s) {
        const std::size_t lo = n * static_cast<std::size_t>(s) / static_cast<std::size_t>(shards);
        const std::size_t hi =
            n * (static_cast<std::size_t>(s) + 1) / static_cast<std::size_t>(shards);
        for (std::size_t i = lo; i < hi; ++i) parts[static_cast<std::size_t>(s)].emit(records[i]);
    });
    Aggregator result = std::move(parts.front());
    for (int s = 1; s < shards; ++s) result.merge(parts[static_cast<std::size_t>(s)]);
    return result;
}

} // namespace normlens
