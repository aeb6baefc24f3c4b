#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "normlens/errors.hpp"
#include "normlens/report.hpp"
#include "normlens/rng.hpp"

using namespace normlens;

namespace {

// Independent Spearman oracle for distinct values: rho = 1 - 6*sum(d^2)/(n(n^2-1)).
double spearman_distinct_oracle(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double sum_d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto rank = static_cast<double>(
            std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin() + 1);
        const double d = static_cast<double>(i + 1) - rank;
        sum_d2 += d * d;
    }
    const auto nn = static_cast<double>(n);
    return 1.0 - 6.0 * sum_d2 / (nn * (nn * nn - 1.0));
}

Aggregator tiny_aggregates() {
    Aggregator agg(2);
    TapRecord r;
    r.layer = 0;
    r.tap = TapPoint::PreLN1;
    r.token_index = 0;
    r.vector = {1.0f, -1.0f};
    agg.emit(r);
    return agg;
}

std::vector<TapRecord> layered_records(int layers, int tokens) {
    SeededRng rng(5);
    std::vector<TapRecord> records;
    for (int tok = 0; tok < tokens; ++tok) {
        for (int l = 0; l < layers; ++l) {
            for (int tap = 0; tap < kTapCount; ++tap) {
                TapRecord r;
                r.layer = static_cast<std::uint16_t>(l);
                r.tap = static_cast<TapPoint>(tap);
                r.token_index = static_cast<std::uint64_t>(tok);
                r.vector.resize(8);
                for (auto& v : r.vector) v = static_cast<float>(rng.normal());
                records.push_back(std::move(r));
            }
        }
    }
    return records;
}

} // namespace

TEST_CASE("build_report: single record") {
    const auto report = build_report(tiny_aggregates());
    REQUIRE(report.rows.size() == 1);
    const auto& row = report.rows[0];
    CHECK(row.layer == 0);
    CHECK(row.tap == TapPoint::PreLN1);
    CHECK(row.norm_mean == doctest::Approx(std::sqrt(2.0)));
    CHECK(row.angle_uniform_mean == doctest::Approx(90.0));
    CHECK(row.sample_count == 1);
    CHECK(row.skipped == 0);
    CHECK_FALSE(row.has_rotation);
    // the 90-degree bin holds all the mass
    CHECK(report.histograms.at("0/PreLN1").counts[180] == 1);

    Aggregator empty(4);
    CHECK_THROWS_AS(build_report(empty), EmptyReportError);
}

TEST_CASE("build_report: deterministic ordering and rotation columns") {
    const auto records = layered_records(3, 10);
    const auto agg = aggregate_records(records, 8);
    const auto report = build_report(agg);
    REQUIRE(report.rows.size() == 3u * kTapCount);
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
        const auto& a = report.rows[i - 1];
        const auto& b = report.rows[i];
        const bool ordered = a.layer < b.layer ||
                             (a.layer == b.layer && static_cast<int>(a.tap) < static_cast<int>(b.tap));
        CHECK(ordered);
    }
    for (const auto& row : report.rows) {
        CHECK(row.has_rotation == rotation_pre_tap(row.tap).has_value());
        CHECK(row.angle_uniform_mean >= 0.0);
        CHECK(row.angle_uniform_mean <= 180.0);
        if (row.has_rotation) {
            CHECK(row.rotation_mean >= 0.0);
            CHECK(row.rotation_mean <= 180.0);
        }
        // histogram mass conservation per (layer, tap)
        const auto key = std::to_string(row.layer) + "/" + tap_name(row.tap);
        CHECK(report.histograms.at(key).total() + row.skipped == row.sample_count);
    }
}

TEST_CASE("rotation is zero when post equals pre") {
    Aggregator agg(2);
    for (int tok = 0; tok < 5; ++tok) {
        TapRecord r;
        r.layer = 0;
        r.token_index = static_cast<std::uint64_t>(tok);
        r.vector = {0.5f, 2.0f};
        r.tap = TapPoint::PreLN1;
        agg.emit(r);
        r.tap = TapPoint::PostLN1;
        agg.emit(r);
    }
    const auto report = build_report(agg);
    for (const auto& row : report.rows) {
        if (row.tap == TapPoint::PostLN1) {
            CHECK(row.rotation_mean == doctest::Approx(0.0));
            CHECK(row.rotation_std == doctest::Approx(0.0));
        }
    }
}

TEST_CASE("trend_test") {
    const std::vector<double> up{1, 2, 3, 4};
    auto r = trend_test(up);
    CHECK(r.spearman_rho == doctest::Approx(1.0));
    CHECK(r.monotone_increasing);

    const std::vector<double> down{4, 3, 2, 1};
    r = trend_test(down);
    CHECK(r.spearman_rho == doctest::Approx(-1.0));
    CHECK_FALSE(r.monotone_increasing);

    const std::vector<double> swapped{1, 3, 2, 4};
    r = trend_test(swapped);
    CHECK(r.spearman_rho == doctest::Approx(0.8));
    CHECK(r.spearman_rho == doctest::Approx(spearman_distinct_oracle(swapped)));
    CHECK_FALSE(r.monotone_increasing);

    // random distinct sequences agree with the closed-form oracle
    SeededRng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> xs(9);
        for (auto& x : xs) x = rng.normal();
        CHECK(trend_test(xs).spearman_rho ==
              doctest::Approx(spearman_distinct_oracle(xs)).epsilon(1e-12));
    }

    // ties get average ranks; a constant sequence has no defined trend
    const std::vector<double> tied{1, 1, 2};
    CHECK(trend_test(tied).spearman_rho == doctest::Approx(0.866).epsilon(1e-3));

    CHECK_THROWS_AS(trend_test(std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("render: csv schema and determinism") {
    const auto records = layered_records(2, 6);
    const auto report = build_report(aggregate_records(records, 8));

    const std::string csv = render_csv(report);
    const std::string first_line = csv.substr(0, csv.find('\n'));
    CHECK(first_line ==
          "layer,tap,norm_mean,norm_std,norm_max,angle_uniform_mean,angle_uniform_std,"
          "rotation_mean,rotation_std,sample_count,skipped");
    CHECK(csv == render_csv(report));

    const std::string json = render_json(report);
    CHECK(json == render_json(report));
    const std::string svg = render_svg(report);
    CHECK(svg == render_svg(report));
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("render: json round trip preserves the report") {
    const auto records = layered_records(2, 8);
    Aggregator agg = aggregate_records(records, 8);
    Report report = build_report(agg);
    report.meta["model"] = "toy";

    const auto parsed = parse_report_json(render_json(report));
    REQUIRE(parsed.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& a = report.rows[i];
        const auto& b = parsed.rows[i];
        CHECK(a.layer == b.layer);
        CHECK(a.tap == b.tap);
        CHECK(a.norm_mean == b.norm_mean);
        CHECK(a.norm_std == b.norm_std);
        CHECK(a.norm_max == b.norm_max);
        CHECK(a.angle_uniform_mean == b.angle_uniform_mean);
        CHECK(a.angle_uniform_std == b.angle_uniform_std);
        CHECK(a.has_rotation == b.has_rotation);
        CHECK(a.rotation_mean == b.rotation_mean);
        CHECK(a.rotation_std == b.rotation_std);
        CHECK(a.sample_count == b.sample_count);
        CHECK(a.skipped == b.skipped);
    }
    CHECK(parsed.histograms.size() == report.histograms.size());
    for (const auto& [key, hist] : report.histograms) {
        CHECK(parsed.histograms.at(key).counts == hist.counts);
    }
    CHECK(parsed.meta.at("model") == "toy");

    CHECK_THROWS_AS(parse_report_json("not json"), FormatError);
}

TEST_CASE("write_report_files writes one file per format") {
    const auto dir = std::filesystem::temp_directory_path() / "normlens_report_test";
    std::filesystem::remove_all(dir);
    const auto report = build_report(tiny_aggregates());
    const auto files = write_report_files(report, dir.string(), {"csv", "json", "svg"});
    CHECK(files.size() == 3);
    for (const auto& f : files) CHECK(std::filesystem::file_size(f) > 0);
    CHECK_THROWS_AS(write_report_files(report, dir.string(), {"xml"}), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cross_layer_summary merges per-layer cells") {
    const auto records = layered_records(3, 10);
    const auto agg = aggregate_records(records, 8);
    const auto summary = cross_layer_summary(agg);
    CHECK(summary.size() == kTapCount);
    for (const auto& s : summary) {
        CHECK(s.norm.count == 30); // 3 layers x 10 tokens
    }
}
