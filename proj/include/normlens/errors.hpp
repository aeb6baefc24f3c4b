#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace normlens {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidSampleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateAngleError : std::domain_error {
    using std::domain_error::domain_error;
};

struct InsufficientBatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Carries how many complete records were read before the stream ended.
struct TruncationError : FormatError {
    TruncationError(const std::string& msg, std::uint64_t records_read)
        : FormatError(msg), records_read(records_read) {}
    std::uint64_t records_read;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContextError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct CorpusError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace normlens
