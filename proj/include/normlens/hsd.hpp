#pragma once

// HSD1 hidden-state dump: one newline-terminated JSON header line, then
// `count` fixed-size binary rows of
//   [layer: u16 LE][tap: u8][token_index: u64 LE][dim x f32 LE].
// The header line is padded with trailing spaces so the final record count
// can be patched in on close without moving the payload.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "normlens/tap.hpp"

namespace normlens {

struct HsdHeader {
    std::string magic = "HSD1";
    std::string dtype = "f32le";
    int dim = 0;
    int n_layers = 0;
    std::vector<int> taps; // tap codes the producer emits, in order
    std::uint64_t count = 0;
    std::map<std::string, std::string> meta;

    std::size_t row_bytes() const {
        return 2 + 1 + 8 + 4 * static_cast<std::size_t>(dim);
    }
};

class HsdWriter final : public TapSink {
public:
    HsdWriter(const std::string& path, int dim, int n_layers, std::vector<int> taps,
              std::map<std::string, std::string> meta = {});
    ~HsdWriter() override;

    void emit(const TapRecord& record) override; // FormatError on dim mismatch
    HsdHeader close();                           // patches the final count
    using TapSink::emit;

private:
    void write_header_line(std::uint64_t count);

    std::ofstream out_;
    HsdHeader header_;
    std::size_t header_width_ = 0; // JSON line width excluding the newline
    bool closed_ = false;
    std::vector<char> rowbuf_;
};

class HsdReader {
public:
    explicit HsdReader(const std::string& path);

    const HsdHeader& header() const { return header_; }

    // Yields exactly header.count records, then returns false.
    // Throws TruncationError (with the number of complete records read) if the
    // stream ends early.
    bool next(TapRecord& out);

    std::uint64_t records_read() const { return read_; }

private:
    std::ifstream in_;
    HsdHeader header_;
    std::uint64_t read_ = 0;
    std::vector<char> rowbuf_;
};

} // namespace normlens
