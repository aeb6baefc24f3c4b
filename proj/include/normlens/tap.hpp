#pragma once

// Tap points name probe locations in the forward pass. The integer codes are
// the serialization contract for the HSD format and must stay stable.

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "normlens/vec_math.hpp"

namespace normlens {

enum class TapPoint : std::uint8_t {
    PreLN1 = 0,
    PostLN1Std = 1, // standardized, before scale-and-shift
    PostLN1 = 2,
    PreLN2 = 3,
    PostLN2Std = 4,
    PostLN2 = 5,
    ResidualOut = 6,
};

inline constexpr int kTapCount = 7;

const char* tap_name(TapPoint tap);
std::optional<TapPoint> tap_from_code(int code);
std::optional<TapPoint> tap_from_name(const std::string& name);

struct TapRecord {
    std::uint16_t layer = 0;
    TapPoint tap = TapPoint::PreLN1;
    std::uint64_t token_index = 0;
    Vec vector;
};

class TapSink {
public:
    virtual ~TapSink() = default;
    virtual void emit(const TapRecord& record) = 0;

    // Convenience for producers computing in double.
    void emit(std::uint16_t layer, TapPoint tap, std::uint64_t token_index,
              std::span<const double> v) {
        TapRecord rec;
        rec.layer = layer;
        rec.tap = tap;
        rec.token_index = token_index;
        rec.vector.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) rec.vector[i] = static_cast<float>(v[i]);
        emit(rec);
    }
};

// Fans one record stream out to several sinks.
class TapTee final : public TapSink {
public:
    void add(TapSink* sink) {
        if (sink) sinks_.push_back(sink);
    }
    void emit(const TapRecord& record) override {
        for (auto* s : sinks_) s->emit(record);
    }

private:
    std::vector<TapSink*> sinks_;
};

} // namespace normlens
