#include "normlens/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "normlens/errors.hpp"

namespace normlens {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string hist_key(int layer, TapPoint tap) {
    return std::to_string(layer) + "/" + tap_name(tap);
}

} // namespace

Report build_report(const Aggregator& aggregates) {
    if (aggregates.cells().empty()) {
        throw EmptyReportError("no records aggregated, nothing to report");
    }
    Report report;
    for (const auto& [key, cell] : aggregates.cells()) { // map: layer asc, tap asc
        LayerStatRow row;
        row.layer = key.layer;
        row.tap = key.tap;
        row.norm_mean = cell.norm.mean;
        row.norm_std = cell.norm.stddev();
        row.norm_max = cell.norm.count > 0 ? cell.norm.max : 0.0;
        row.angle_uniform_mean = cell.angle_uniform.mean;
        row.angle_uniform_std = cell.angle_uniform.stddev();
        row.has_rotation = rotation_pre_tap(key.tap).has_value();
        if (row.has_rotation) {
            row.rotation_mean = cell.rotation.mean;
            row.rotation_std = cell.rotation.stddev();
        }
        row.sample_count = cell.norm.count;
        row.skipped = cell.skipped;
        report.rows.push_back(row);
        report.histograms[hist_key(key.layer, key.tap)] = cell.histogram;
    }
    return report;
}

TrendResult trend_test(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 3) throw DimensionError("trend_test: need at least 3 layers");

    // average ranks (ties share the mean of their rank run)
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    // Pearson correlation between ranks and the index sequence 1..n
    const double mean_idx = (static_cast<double>(n) + 1.0) / 2.0;
    double mean_rank = 0.0;
    for (double r : rank) mean_rank += r;
    mean_rank /= static_cast<double>(n);
    double cov = 0.0, var_i = 0.0, var_r = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double di = static_cast<double>(t + 1) - mean_idx;
        const double dr = rank[t] - mean_rank;
        cov += di * dr;
        var_i += di * di;
        var_r += dr * dr;
    }
    TrendResult result;
    result.spearman_rho = (var_i > 0.0 && var_r > 0.0) ? cov / std::sqrt(var_i * var_r) : 0.0;
    result.monotone_increasing = result.spearman_rho > 1.0 - 1e-12;
    return result;
}

std::string render_csv(const Report& report) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const auto& r : report.rows) {
        out += std::to_string(r.layer);
        out += ',';
        out += tap_name(r.tap);
        out += ',';
        out += fmt_double(r.norm_mean);
        out += ',';
        out += fmt_double(r.norm_std);
        out += ',';
        out += fmt_double(r.norm_max);
        out += ',';
        out += fmt_double(r.angle_uniform_mean);
        out += ',';
        out += fmt_double(r.angle_uniform_std);
        out += ',';
        if (r.has_rotation) {
            out += fmt_double(r.rotation_mean);
            out += ',';
            out += fmt_double(r.rotation_std);
        } else {
            out += ',';
        }
        out += ',';
        out += std::to_string(r.sample_count);
        out += ',';
        out += std::to_string(r.skipped);
        out += '\n';
    }
    return out;
}

std::string render_json(const Report& report) {
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        nlohmann::ordered_json row;
        row["layer"] = r.layer;
        row["tap"] = tap_name(r.tap);
        row["norm_mean"] = r.norm_mean;
        row["norm_std"] = r.norm_std;
        row["norm_max"] = r.norm_max;
        row["angle_uniform_mean"] = r.angle_uniform_mean;
        row["angle_uniform_std"] = r.angle_uniform_std;
        if (r.has_rotation) {
            row["rotation_mean"] = r.rotation_mean;
            row["rotation_std"] = r.rotation_std;
        } else {
            row["rotation_mean"] = nullptr;
            row["rotation_std"] = nullptr;
        }
        row["sample_count"] = r.sample_count;
        row["skipped"] = r.skipped;
        j["rows"].push_back(row);
    }
    j["histograms"] = nlohmann::ordered_json::object();
    for (const auto& [key, hist] : report.histograms) {
        j["histograms"][key] = hist.counts;
    }
    j["meta"] = report.meta;
    return j.dump(2) + "\n";
}

Report parse_report_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report JSON: ") + e.what());
    }
    Report report;
    try {
        for (const auto& row : j.at("rows")) {
            LayerStatRow r;
            r.layer = row.at("layer").get<int>();
            const auto tap = tap_from_name(row.at("tap").get<std::string>());
            if (!tap) throw FormatError("report JSON: unknown tap " + row.at("tap").get<std::string>());
            r.tap = *tap;
            r.norm_mean = row.at("norm_mean").get<double>();
            r.norm_std = row.at("norm_std").get<double>();
            r.norm_max = row.at("norm_max").get<double>();
            r.angle_uniform_mean = row.at("angle_uniform_mean").get<double>();
            r.angle_uniform_std = row.at("angle_uniform_std").get<double>();
            r.has_rotation = !row.at("rotation_mean").is_null();
            if (r.has_rotation) {
                r.rotation_mean = row.at("rotation_mean").get<double>();
                r.rotation_std = row.at("rotation_std").get<double>();
            }
            r.sample_count = row.at("sample_count").get<std::uint64_t>();
            r.skipped = row.at("skipped").get<std::uint64_t>();
            report.rows.push_back(r);
        }
        for (const auto& [key, counts] : j.at("histograms").items()) {
            AngleHistogram h;
            if (counts.size() != kAngleBins) throw FormatError("report JSON: bad histogram size");
            for (std::size_t i = 0; i < kAngleBins; ++i) {
                h.counts[i] = counts.at(i).get<std::uint64_t>();
            }
            report.histograms[key] = h;
        }
        if (j.contains("meta")) {
            report.meta = j.at("meta").get<std::map<std::string, std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report JSON: ") + e.what());
    }
    return report;
}

std::vector<std::string> write_report_files(const Report& report, const std::string& dir,
                                            const std::set<std::string>& formats) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::vector<std::string> written;
    auto write_file = [&](const std::string& name, const std::string& content) {
        const std::string path = (std::filesystem::path(dir) / name).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("failed writing " + path);
        written.push_back(path);
    };
    for (const auto& fmt : formats) {
        if (fmt == "csv") {
            write_file("report.csv", render_csv(report));
        } else if (fmt == "json") {
            write_file("report.json", render_json(report));
        } else if (fmt == "svg") {
            write_file("report.svg", render_svg(report));
        } else {
            throw FormatError("unknown report format: " + fmt);
        }
    }
    return written;
}

std::vector<TapSummary> cross_layer_summary(const Aggregator& aggregates) {
    std::map<TapPoint, TapSummary> by_tap;
    for (const auto& [key, cell] : aggregates.cells()) {
        auto& s = by_tap[key.tap];
        s.tap = key.tap;
        s.norm.merge(cell.norm);
        s.angle_uniform.merge(cell.angle_uniform);
        s.rotation.merge(cell.rotation);
    }
    std::vector<TapSummary> out;
    for (auto& [tap, s] : by_tap) out.push_back(s);
    return out;
}

} // namespace normlens
