#include "normlens/hsd.hpp"

#include <cstring>
#include <limits>

#include "json.hpp"

#include "normlens/errors.hpp"

namespace normlens {

namespace {

std::string header_json(const HsdHeader& h, std::uint64_t count) {
    nlohmann::ordered_json j;
    j["magic"] = h.magic;
    j["dtype"] = h.dtype;
    j["dim"] = h.dim;
    j["n_layers"] = h.n_layers;
    j["taps"] = h.taps;
    j["count"] = count;
    j["meta"] = h.meta; // std::map serializes in key order
    return j.dump();
}

} // namespace

HsdWriter::HsdWriter(const std::string& path, int dim, int n_layers, std::vector<int> taps,
                     std::map<std::string, std::string> meta)
    : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open HSD file for writing: " + path);
    if (dim < 1) throw FormatError("HSD: dim must be >= 1");
    header_.dim = dim;
    header_.n_layers = n_layers;
    header_.taps = std::move(taps);
    header_.meta = std::move(meta);
    // Reserve enough width for the largest possible count.
    header_width_ = header_json(header_, std::numeric_limits<std::uint64_t>::max()).size();
    write_header_line(0);
    rowbuf_.resize(header_.row_bytes());
}

HsdWriter::~HsdWriter() {
    if (!closed_) {
        try {
            close();
        } catch (...) {
            // destructor must not throw
        }
    }
}

void HsdWriter::write_header_line(std::uint64_t count) {
    std::string line = header_json(header_, count);
    line.resize(header_width_, ' ');
    out_.seekp(0);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.put('\n');
    if (!out_) throw IoError("HSD: header write failed");
}

void HsdWriter::emit(const TapRecord& record) {
    if (closed_) throw IoError("HSD: write after close");
    if (static_cast<int>(record.vector.size()) != header_.dim) {
        throw FormatError("HSD: record dim " + std::to_string(record.vector.size()) +
                          " does not match header dim " + std::to_string(header_.dim));
    }
    char* p = rowbuf_.data();
    std::memcpy(p, &record.layer, 2);
    p += 2;
    const std::uint8_t tap = static_cast<std::uint8_t>(record.tap);
    std::memcpy(p, &tap, 1);
    p += 1;
    std::memcpy(p, &record.token_index, 8);
    p += 8;
    std::memcpy(p, record.vector.data(), record.vector.size() * sizeof(float));
    out_.write(rowbuf_.data(), static_cast<std::streamsize>(rowbuf_.size()));
    if (!out_) throw IoError("HSD: row write failed");
    ++header_.count;
}

HsdHeader HsdWriter::close() {
    if (closed_) return header_;
    closed_ = true;
    write_header_line(header_.count);
    out_.flush();
    if (!out_) throw IoError("HSD: flush failed");
    out_.close();
    return header_;
}

HsdReader::HsdReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open HSD file: " + path);
    std::string line;
    if (!std::getline(in_, line)) throw FormatError("HSD: missing header line");
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("HSD: bad header JSON: ") + e.what());
    }
    try {
        header_.magic = j.at("magic").get<std::string>();
        header_.dtype = j.at("dtype").get<std::string>();
        header_.dim = j.at("dim").get<int>();
        header_.n_layers = j.value("n_layers", 0);
        header_.taps = j.value("taps", std::vector<int>{});
        header_.count = j.at("count").get<std::uint64_t>();
        if (j.contains("meta")) {
            header_.meta = j.at("meta").get<std::map<std::string, std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("HSD: header fields: ") + e.what());
    }
    if (header_.magic != "HSD1") throw FormatError("HSD: bad magic '" + header_.magic + "'");
    if (header_.dtype != "f32le") throw FormatError("HSD: unsupported dtype '" + header_.dtype + "'");
    if (header_.dim < 1) throw FormatError("HSD: invalid dim");
    rowbuf_.resize(header_.row_bytes());
}

bool HsdReader::next(TapRecord& out) {
    if (read_ >= header_.count) return false;
    in_.read(rowbuf_.data(), static_cast<std::streamsize>(rowbuf_.size()));
    if (in_.gcount() != static_cast<std::streamsize>(rowbuf_.size())) {
        throw TruncationError("HSD: truncated after " + std::to_string(read_) + " records", read_);
    }
    const char* p = rowbuf_.data();
    std::memcpy(&out.layer, p, 2);
    p += 2;
    std::uint8_t tapcode = 0;
    std::memcpy(&tapcode, p, 1);
    p += 1;
    const auto tap = tap_from_code(tapcode);
    if (!tap) throw FormatError("HSD: invalid tap code " + std::to_string(int(tapcode)));
    out.tap = *tap;
    std::memcpy(&out.token_index, p, 8);
    p += 8;
    out.vector.resize(static_cast<std::size_t>(header_.dim));
    std::memcpy(out.vector.data(), p, out.vector.size() * sizeof(float));
    ++read_;
    return true;
}

} // namespace normlens
