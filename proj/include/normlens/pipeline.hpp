#pragma once

// Capture pipeline: stream text through a model window by window, emit taps
// into the aggregator (and any extra sink, e.g. an HSD writer). Aggregation by
// default, persistence opt-in; nothing is ever buffered per token.

#include <cstdint>
#include <span>

#include "normlens/aggregate.hpp"
#include "normlens/model.hpp"

namespace normlens {

struct CaptureStats {
    std::uint64_t tokens = 0;
    std::uint64_t records = 0;
};

// Processes up to max_tokens bytes of `text` (0 = all of it) in windows of
// config.context_len. Throws EmptyReportError when no tokens are available.
CaptureStats run_capture(const Model& model, std::span<const std::uint8_t> text,
                         std::uint64_t max_tokens, Aggregator& aggregates,
                         TapSink* extra = nullptr, Exec mode = Exec::Parallel);

} // namespace normlens
