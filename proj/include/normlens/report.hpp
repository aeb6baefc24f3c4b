#pragma once

// Turns aggregates into report products: one row per (layer, tap) with norm,
// angle-to-uniform and rotation statistics, angle histograms, and CSV / JSON /
// SVG renderings. Rendering is a pure function of the report; identical
// reports give byte-identical files.

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "normlens/aggregate.hpp"

namespace normlens {

struct LayerStatRow {
    int layer = 0;
    TapPoint tap = TapPoint::PreLN1;
    double norm_mean = 0.0;
    double norm_std = 0.0;
    double norm_max = 0.0;
    double angle_uniform_mean = 0.0;
    double angle_uniform_std = 0.0;
    bool has_rotation = false;
    double rotation_mean = 0.0;
    double rotation_std = 0.0;
    std::uint64_t sample_count = 0;
    std::uint64_t skipped = 0;
};

struct Report {
    std::vector<LayerStatRow> rows;                      // layer asc, tap code asc
    std::map<std::string, AngleHistogram> histograms;    // "<layer>/<tap>" -> bins
    std::map<std::string, std::string> meta;
};

Report build_report(const Aggregator& aggregates); // EmptyReportError if no cells

struct TrendResult {
    double spearman_rho = 0.0;
    bool monotone_increasing = false;
};

// Spearman rank correlation of `values` against their index, average ranks on
// ties. Needs at least 3 values.
TrendResult trend_test(std::span<const double> values);

std::string render_csv(const Report& report);
std::string render_json(const Report& report);
std::string render_svg(const Report& report);

Report parse_report_json(const std::string& text); // FormatError on bad input

inline const char* kCsvHeader =
    "layer,tap,norm_mean,norm_std,norm_max,angle_uniform_mean,angle_uniform_std,"
    "rotation_mean,rotation_std,sample_count,skipped";

// Writes report.<fmt> into `dir` for each requested format ("csv", "json",
// "svg"); returns the paths written.
std::vector<std::string> write_report_files(const Report& report, const std::string& dir,
                                            const std::set<std::string>& formats);

// Cross-layer summary per tap (the paper's table shape), derived by merging
// the per-layer moments.
struct TapSummary {
    TapPoint tap = TapPoint::PreLN1;
    StreamingMoments norm;
    StreamingMoments angle_uniform;
    StreamingMoments rotation;
};
std::vector<TapSummary> cross_layer_summary(const Aggregator& aggregates);

} // namespace normlens
