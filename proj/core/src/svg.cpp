#include "trg/svg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

namespace trg {

namespace {

bool parse_number(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && !s.empty();
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, v);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::vector<PlotSeries> series_from_table(const CsvTable& table, const std::string& origin) {
    const size_t cols = table.header.size();
    if (cols < 2) throw CsvError(origin + ": need at least two columns to plot");

    // x column must be numeric everywhere
    std::vector<double> xs(table.rows.size());
    for (size_t r = 0; r < table.rows.size(); ++r)
        if (!parse_number(table.rows[r][0], xs[r]))
            throw CsvError(origin + ":" + std::to_string(r + 2) + ": x value \"" +
                           table.rows[r][0] + "\" is not numeric");

    std::vector<bool> numeric(cols, true);
    for (size_t c = 1; c < cols; ++c)
        for (const auto& row : table.rows) {
            double tmp;
            if (!parse_number(row[c], tmp)) {
                numeric[c] = false;
                break;
            }
        }
    bool any_numeric = false;
    for (size_t c = 1; c < cols; ++c) any_numeric = any_numeric || numeric[c];
    if (!any_numeric) throw CsvError(origin + ": no numeric column to plot");

    // group rows by the concatenation of non-numeric cells, in first-appearance order
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t r = 0; r < table.rows.size(); ++r) {
        std::string key;
        for (size_t c = 1; c < cols; ++c)
            if (!numeric[c]) {
                if (!key.empty()) key += "/";
                key += table.rows[r][c];
            }
        if (!groups.count(key)) group_order.push_back(key);
        groups[key].push_back(r);
    }

    std::vector<PlotSeries> out;
    for (const auto& key : group_order)
        for (size_t c = 1; c < cols; ++c) {
            if (!numeric[c]) continue;
            PlotSeries s;
            s.name = key.empty() ? table.header[c] : key + " " + table.header[c];
            for (size_t r : groups[key]) {
                double y;
                parse_number(table.rows[r][c], y);
                s.points.emplace_back(xs[r], y);
            }
            out.push_back(std::move(s));
        }
    return out;
}

std::string render_line_chart(const std::vector<PlotSeries>& series, const std::string& x_label,
                              const std::string& title) {
    if (series.empty()) throw CsvError("plot: no series to draw");
    const double width = 640, height = 420;
    const double ml = 64, mr = 150, mt = 36, mb = 44;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = series[0].points[0].first, xmax = xmin;
    double ymin = series[0].points[0].second, ymax = ymin;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmax == xmin) {
        xmin -= 1;
        xmax += 1;
    }
    if (ymax == ymin) {
        ymin -= 1;
        ymax += 1;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
           "viewBox=\"0 0 640 420\">\n";
    svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", ml + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";

    // axes
    svg += "<line x1=\"" + fmt("%.1f", ml) + "\" y1=\"" + fmt("%.1f", mt) + "\" x2=\"" +
           fmt("%.1f", ml) + "\" y2=\"" + fmt("%.1f", mt + ph) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt("%.1f", ml) + "\" y1=\"" + fmt("%.1f", mt + ph) + "\" x2=\"" +
           fmt("%.1f", ml + pw) + "\" y2=\"" + fmt("%.1f", mt + ph) + "\" stroke=\"black\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        svg += "<line x1=\"" + fmt("%.1f", px(fx)) + "\" y1=\"" + fmt("%.1f", mt + ph) +
               "\" x2=\"" + fmt("%.1f", px(fx)) + "\" y2=\"" + fmt("%.1f", mt + ph + 4) +
               "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", px(fx)) + "\" y=\"" + fmt("%.1f", mt + ph + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
               fmt("%.4g", fx) + "</text>\n";
        svg += "<line x1=\"" + fmt("%.1f", ml - 4) + "\" y1=\"" + fmt("%.1f", py(fy)) +
               "\" x2=\"" + fmt("%.1f", ml) + "\" y2=\"" + fmt("%.1f", py(fy)) +
               "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", ml - 8) + "\" y=\"" + fmt("%.1f", py(fy) + 3) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
               fmt("%.4g", fy) + "</text>\n";
    }
    svg += "<text x=\"" + fmt("%.1f", ml + pw / 2) + "\" y=\"" + fmt("%.1f", height - 8) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + x_label +
           "</text>\n";

    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % 8];
        std::string pts;
        for (const auto& [x, y] : series[i].points) {
            if (!pts.empty()) pts += " ";
            pts += fmt("%.2f", px(x)) + "," + fmt("%.2f", py(y));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        const double ly = mt + 14 + 16 * static_cast<double>(i);
        svg += "<line x1=\"" + fmt("%.1f", ml + pw + 10) + "\" y1=\"" + fmt("%.1f", ly - 4) +
               "\" x2=\"" + fmt("%.1f", ml + pw + 28) + "\" y2=\"" + fmt("%.1f", ly - 4) +
               "\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", ml + pw + 32) + "\" y=\"" + fmt("%.1f", ly) +
               "\" font-family=\"sans-serif\" font-size=\"10\">" + series[i].name + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace trg
