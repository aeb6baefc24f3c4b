// Static SVG 1.1 rendering for reports: per-tap line plots of norm_mean across
// layers with dashed +/- one-standard-deviation bands, and angle-to-uniform
// histograms for a representative (middle) layer. Output is deterministic.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "normlens/report.hpp"

namespace normlens {

namespace {

constexpr double kPanelW = 360.0;
constexpr double kPanelH = 240.0;
constexpr double kMarginL = 52.0;
constexpr double kMarginR = 12.0;
constexpr double kMarginT = 30.0;
constexpr double kMarginB = 34.0;
constexpr int kColumns = 2;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct Panel {
    std::string body;
    double ox = 0.0, oy = 0.0;

    void text(double x, double y, const std::string& s, const char* anchor = "start",
              int size = 11) {
        body += "<text x=\"" + num(ox + x) + "\" y=\"" + num(oy + y) + "\" font-size=\"" +
                std::to_string(size) + "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
                "\">" + s + "</text>\n";
    }
    void line(double x1, double y1, double x2, double y2, const char* stroke,
              bool dashed = false) {
        body += "<line x1=\"" + num(ox + x1) + "\" y1=\"" + num(oy + y1) + "\" x2=\"" +
                num(ox + x2) + "\" y2=\"" + num(oy + y2) + "\" stroke=\"" + stroke +
                "\" stroke-width=\"1\"" +
                (dashed ? " stroke-dasharray=\"4,3\"" : "") + "/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke,
                  bool dashed = false) {
        if (pts.empty()) return;
        body += "<polyline fill=\"none\" stroke=\"";
        body += stroke;
        body += "\" stroke-width=\"1.5\"";
        if (dashed) body += " stroke-dasharray=\"4,3\"";
        body += " points=\"";
        for (const auto& [x, y] : pts) {
            body += num(ox + x) + "," + num(oy + y) + " ";
        }
        body += "\"/>\n";
    }
    void rect(double x, double y, double w, double h, const char* fill) {
        body += "<rect x=\"" + num(ox + x) + "\" y=\"" + num(oy + y) + "\" width=\"" + num(w) +
                "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"/>\n";
    }
};

struct Series {
    std::vector<int> layers;
    std::vector<double> mean, stddev;
};

Panel norm_panel(const std::string& title, const Series& s, double ox, double oy) {
    Panel p;
    p.ox = ox;
    p.oy = oy;
    const double plot_w = kPanelW - kMarginL - kMarginR;
    const double plot_h = kPanelH - kMarginT - kMarginB;

    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
        lo = std::min(lo, s.mean[i] - s.stddev[i]);
        hi = std::max(hi, s.mean[i] + s.stddev[i]);
    }
    if (lo > hi) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-9) {
        hi += 0.5;
        lo -= 0.5;
    }
    const double span = hi - lo;
    lo -= 0.05 * span;
    hi += 0.05 * span;

    const int n = static_cast<int>(s.layers.size());
    auto px = [&](int i) {
        return kMarginL + (n > 1 ? plot_w * i / (n - 1) : plot_w / 2.0);
    };
    auto py = [&](double v) { return kMarginT + plot_h * (1.0 - (v - lo) / (hi - lo)); };

    p.text(kPanelW / 2.0, 18.0, title, "middle", 12);
    p.line(kMarginL, kMarginT, kMarginL, kMarginT + plot_h, "#444");
    p.line(kMarginL, kMarginT + plot_h, kMarginL + plot_w, kMarginT + plot_h, "#444");
    p.text(kMarginL - 6, py(lo + 0.05 * span) + 4, num(lo + 0.05 * span), "end", 9);
    p.text(kMarginL - 6, py(hi - 0.05 * span) + 4, num(hi - 0.05 * span), "end", 9);
    p.text(kPanelW / 2.0, kPanelH - 8, "layer", "middle", 10);

    std::vector<std::pair<double, double>> mid, up, dn;
    for (int i = 0; i < n; ++i) {
        mid.emplace_back(px(i), py(s.mean[static_cast<std::size_t>(i)]));
        up.emplace_back(px(i), py(s.mean[static_cast<std::size_t>(i)] +
                                  s.stddev[static_cast<std::size_t>(i)]));
        dn.emplace_back(px(i), py(s.mean[static_cast<std::size_t>(i)] -
                                  s.stddev[static_cast<std::size_t>(i)]));
        p.text(px(i), kMarginT + plot_h + 14, std::to_string(s.layers[static_cast<std::size_t>(i)]),
               "middle", 9);
    }
    p.polyline(up, "#7799cc", true);
    p.polyline(dn, "#7799cc", true);
    p.polyline(mid, "#224488");
    return p;
}

Panel hist_panel(const std::string& title, const AngleHistogram& hist, double ox, double oy) {
    Panel p;
    p.ox = ox;
    p.oy = oy;
    const double plot_w = kPanelW - kMarginL - kMarginR;
    const double plot_h = kPanelH - kMarginT - kMarginB;

    std::uint64_t peak = 0;
    int first = kAngleBins, last = -1;
    for (int i = 0; i < kAngleBins; ++i) {
        if (hist.counts[static_cast<std::size_t>(i)] > 0) {
            peak = std::max(peak, hist.counts[static_cast<std::size_t>(i)]);
            first = std::min(first, i);
            last = std::max(last, i);
        }
    }
    p.text(kPanelW / 2.0, 18.0, title, "middle", 12);
    p.line(kMarginL, kMarginT, kMarginL, kMarginT + plot_h, "#444");
    p.line(kMarginL, kMarginT + plot_h, kMarginL + plot_w, kMarginT + plot_h, "#444");
    p.text(kPanelW / 2.0, kPanelH - 8, "angle to uniform (degrees)", "middle", 10);
    if (last < 0) {
        p.text(kPanelW / 2.0, kMarginT + plot_h / 2.0, "(empty)", "middle", 10);
        return p;
    }
    // pad the visible range a little
    first = std::max(0, first - 4);
    last = std::min(kAngleBins - 1, last + 4);
    const int bins = last - first + 1;
    const double bw = plot_w / bins;
    for (int i = first; i <= last; ++i) {
        const auto c = hist.counts[static_cast<std::size_t>(i)];
        if (c == 0) continue;
        const double h = plot_h * static_cast<double>(c) / static_cast<double>(peak);
        p.rect(kMarginL + bw * (i - first), kMarginT + plot_h - h, std::max(bw - 0.5, 0.5), h,
               "#668844");
    }
    p.text(kMarginL, kMarginT + plot_h + 14, num(first * kAngleBinWidth), "middle", 9);
    p.text(kMarginL + plot_w, kMarginT + plot_h + 14, num((last + 1) * kAngleBinWidth), "middle",
           9);
    p.text(kMarginL - 6, kMarginT + 4, std::to_string(peak), "end", 9);
    return p;
}

} // namespace

std::string render_svg(const Report& report) {
    // group rows per tap
    std::map<TapPoint, Series> series;
    std::set<int> layers;
    for (const auto& r : report.rows) {
        auto& s = series[r.tap];
        s.layers.push_back(r.layer);
        s.mean.push_back(r.norm_mean);
        s.stddev.push_back(r.norm_std);
        layers.insert(r.layer);
    }
    // representative layer for the histogram panels: the middle one
    int mid_layer = 0;
    if (!layers.empty()) {
        auto it = layers.begin();
        std::advance(it, (layers.size() - 1) / 2);
        mid_layer = *it;
    }

    std::vector<Panel> panels;
    int idx = 0;
    auto place = [&](auto make) {
        const double ox = (idx % kColumns) * kPanelW;
        const double oy = (idx / kColumns) * kPanelH;
        panels.push_back(make(ox, oy));
        ++idx;
    };

    for (const auto& [tap, s] : series) {
        place([&](double ox, double oy) {
            return norm_panel(std::string("norm L2: ") + tap_name(tap), s, ox, oy);
        });
    }
    for (const auto& [tap, s] : series) {
        const std::string key = std::to_string(mid_layer) + "/" + tap_name(tap);
        const auto it = report.histograms.find(key);
        if (it == report.histograms.end()) continue;
        place([&](double ox, double oy) {
            return hist_panel("angles: layer " + std::to_string(mid_layer) + " " + tap_name(tap),
                              it->second, ox, oy);
        });
    }

    const int cols = std::min<int>(kColumns, std::max(idx, 1));
    const int rows = (idx + kColumns - 1) / kColumns;
    const double width = cols * kPanelW;
    const double height = std::max(rows, 1) * kPanelH;

    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
                      num(width) + "\" height=\"" + num(height) + "\" viewBox=\"0 0 " +
                      num(width) + " " + num(height) + "\">\n"
                      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& p : panels) svg += p.body;
    svg += "</svg>\n";
    return svg;
}

} // namespace normlens
