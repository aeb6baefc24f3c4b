#include "normlens/pipeline.hpp"

#include "normlens/errors.hpp"

namespace normlens {

namespace {

class CountingTee final : public TapSink {
public:
    CountingTee(Aggregator& agg, TapSink* extra) : agg_(agg), extra_(extra) {}
    void emit(const TapRecord& record) override {
        agg_.emit(record);
        if (extra_) extra_->emit(record);
        ++records_;
    }
    std::uint64_t records() const { return records_; }

private:
    Aggregator& agg_;
    TapSink* extra_;
    std::uint64_t records_ = 0;
};

} // namespace

CaptureStats run_capture(const Model& model, std::span<const std::uint8_t> text,
                         std::uint64_t max_tokens, Aggregator& aggregates, TapSink* extra,
                         Exec mode) {
    std::uint64_t total = text.size();
    if (max_tokens > 0 && max_tokens < total) total = max_tokens;
    if (total == 0) throw EmptyReportError("capture: no tokens in input text");

    CountingTee tee(aggregates, extra);
    const auto window = static_cast<std::uint64_t>(model.config().context_len);
    std::uint64_t pos = 0;
    while (pos < total) {
        const std::uint64_t len = std::min(window, total - pos);
        forward_full(model, text.subspan(pos, len), &tee, pos, nullptr, mode);
        pos += len;
    }
    return {total, tee.records()};
}

} // namespace normlens
