#include "normlens/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "normlens/errors.hpp"

namespace normlens {

static_assert(std::endian::native == std::endian::little,
              "NLTM1/HSD writers assume a little-endian host");

namespace {

constexpr char kMagic[5] = {'N', 'L', 'T', 'M', '1'};

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["dim"] = cfg.dim;
    j["n_layers"] = cfg.n_layers;
    j["n_heads"] = cfg.n_heads;
    j["ffn_mult"] = cfg.ffn_mult;
    j["vocab_size"] = cfg.vocab_size;
    j["context_len"] = cfg.context_len;
    j["norm_kind"] = norm_kind_name(cfg.norm_kind);
    j["epsilon"] = cfg.epsilon;
    j["seed"] = cfg.seed;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
        cfg.dim = j.at("dim").get<int>();
        cfg.n_layers = j.at("n_layers").get<int>();
        cfg.n_heads = j.at("n_heads").get<int>();
        cfg.ffn_mult = j.at("ffn_mult").get<int>();
        cfg.vocab_size = j.at("vocab_size").get<int>();
        cfg.context_len = j.at("context_len").get<int>();
        cfg.norm_kind = norm_kind_from_name(j.at("norm_kind").get<std::string>());
        cfg.epsilon = j.at("epsilon").get<float>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("NLTM1 header: ") + e.what());
    }
    return cfg;
}

} // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    nlohmann::ordered_json header;
    header["config"] = config_to_json(model.config());
    header["dtype"] = "f32le";
    nlohmann::ordered_json blobs = nlohmann::ordered_json::array();
    for (const auto& s : model.layout()) {
        nlohmann::ordered_json b;
        b["name"] = s.name;
        b["offset"] = s.offset * sizeof(float); // bytes into the payload
        b["rows"] = s.rows;
        b["cols"] = s.cols;
        blobs.push_back(b);
    }
    header["blobs"] = blobs;
    header["payload_bytes"] = model.params().size() * sizeof(float);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(model.params().data()),
              static_cast<std::streamsize>(model.params().size() * sizeof(float)));
    out.flush();
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[5] = {};
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not an NLTM1 checkpoint: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) throw FormatError("NLTM1: missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("NLTM1: bad header JSON: ") + e.what());
    }
    if (header.value("dtype", "") != "f32le") throw FormatError("NLTM1: unsupported dtype");

    Model model(config_from_json(header.at("config")));
    const std::size_t payload = header.value("payload_bytes", std::size_t{0});
    if (payload != model.params().size() * sizeof(float)) {
        throw FormatError("NLTM1: payload size does not match config");
    }
    // Blob table must describe the same layout the config implies.
    const auto& blobs = header.at("blobs");
    if (blobs.size() != model.layout().size()) throw FormatError("NLTM1: blob count mismatch");
    for (std::size_t i = 0; i < model.layout().size(); ++i) {
        const auto& s = model.layout()[i];
        const auto& b = blobs.at(i);
        if (b.at("name").get<std::string>() != s.name ||
            b.at("offset").get<std::size_t>() != s.offset * sizeof(float) ||
            b.at("rows").get<std::size_t>() != s.rows ||
            b.at("cols").get<std::size_t>() != s.cols) {
            throw FormatError("NLTM1: blob table mismatch at " + s.name);
        }
    }
    in.read(reinterpret_cast<char*>(model.params().data()),
            static_cast<std::streamsize>(model.params().size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(model.params().size() * sizeof(float))) {
        throw TruncationError("NLTM1: truncated payload", 0);
    }
    return model;
}

} // namespace normlens
