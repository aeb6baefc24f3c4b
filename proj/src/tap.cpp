#include "normlens/tap.hpp"

namespace normlens {

static const char* const kTapNames[kTapCount] = {
    "PreLN1", "PostLN1Std", "PostLN1", "PreLN2", "PostLN2Std", "PostLN2", "ResidualOut",
};

const char* tap_name(TapPoint tap) { return kTapNames[static_cast<int>(tap)]; }

std::optional<TapPoint> tap_from_code(int code) {
    if (code < 0 || code >= kTapCount) return std::nullopt;
    return static_cast<TapPoint>(code);
}

std::optional<TapPoint> tap_from_name(const std::string& name) {
    for (int i = 0; i < kTapCount; ++i) {
        if (name == kTapNames[i]) return static_cast<TapPoint>(i);
    }
    return std::nullopt;
}

} // namespace normlens
