#include "graphtok3d/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace graphtok3d {

namespace {

constexpr double kWidth = 960, kHeight = 400;
constexpr double kMargin = 50;
constexpr double kPanel = (kWidth - 3 * kMargin) / 2;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"12\" text-anchor=\"" + anchor + "\">" +
           escape(s) + "</text>\n";
}

}  // namespace

std::string training_report_svg(const std::vector<LossCurve>& curves, const std::vector<AccuracyBar>& bars) {
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                      num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    const double top = kMargin, bottom = kHeight - kMargin;
    const double plot_h = bottom - top;

    // loss panel
    const double lx = kMargin;
    std::size_t epochs = 0;
    double max_loss = 0;
    for (const auto& c : curves) {
        epochs = std::max(epochs, c.losses.size());
        for (double v : c.losses)
            if (std::isfinite(v)) max_loss = std::max(max_loss, v);
    }
    if (max_loss <= 0) max_loss = 1;
    svg += "<g id=\"loss\">\n";
    svg += "<rect x=\"" + num(lx) + "\" y=\"" + num(top) + "\" width=\"" + num(kPanel) + "\" height=\"" +
           num(plot_h) + "\" fill=\"none\" stroke=\"black\"/>\n";
    svg += text(lx + kPanel / 2, top - 15, "mean training loss per epoch", "middle");
    svg += text(lx - 5, top + 4, num(max_loss), "end");
    svg += text(lx - 5, bottom + 4, "0", "end");
    svg += text(lx + kPanel, bottom + 18, std::to_string(epochs), "end");
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& c = curves[i];
        if (c.losses.empty()) continue;
        const double step = c.losses.size() > 1 ? kPanel / static_cast<double>(c.losses.size() - 1) : 0;
        std::string pts;
        for (std::size_t e = 0; e < c.losses.size(); ++e) {
            const double v = std::isfinite(c.losses[e]) ? c.losses[e] : max_loss;
            if (!pts.empty()) pts += ' ';
            pts += num(lx + step * static_cast<double>(e)) + "," + num(bottom - plot_h * v / max_loss);
        }
        const char* color = kPalette[i % std::size(kPalette)];
        svg += "<polyline class=\"curve\" fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"" + pts + "\"/>\n";
        svg += "<text x=\"" + num(lx + kPanel - 5) + "\" y=\"" + num(top + 16 + 14 * static_cast<double>(i)) +
               "\" font-size=\"12\" text-anchor=\"end\" fill=\"" + color + "\">" + escape(c.label) + "</text>\n";
    }
    svg += "</g>\n";

    // accuracy panel
    const double ax = 2 * kMargin + kPanel;
    svg += "<g id=\"accuracy\">\n";
    svg += "<rect x=\"" + num(ax) + "\" y=\"" + num(top) + "\" width=\"" + num(kPanel) + "\" height=\"" +
           num(plot_h) + "\" fill=\"none\" stroke=\"black\"/>\n";
    svg += text(ax + kPanel / 2, top - 15, "evaluation accuracy", "middle");
    svg += text(ax - 5, top + 4, "1", "end");
    svg += text(ax - 5, bottom + 4, "0", "end");
    if (!bars.empty()) {
        const double slot = kPanel / static_cast<double>(bars.size());
        for (std::size_t i = 0; i < bars.size(); ++i) {
            const double a = std::clamp(bars[i].accuracy, 0.0, 1.0);
            const double x = ax + slot * static_cast<double>(i) + slot * 0.15;
            svg += "<rect class=\"bar\" x=\"" + num(x) + "\" y=\"" + num(bottom - plot_h * a) + "\" width=\"" +
                   num(slot * 0.7) + "\" height=\"" + num(plot_h * a) + "\" fill=\"" +
                   kPalette[i % std::size(kPalette)] + "\"/>\n";
            svg += text(x + slot * 0.35, bottom + 18, bars[i].label, "middle");
            svg += text(x + slot * 0.35, bottom - plot_h * a - 4, num(a), "middle");
        }
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

}  // namespace graphtok3d
