#pragma once

// Deterministic self-contained SVG line charts for the sweep/metrics CSVs.

#include <string>
#include <utility>
#include <vector>

#include "trg/csv.hpp"

namespace trg {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Interprets a table as plot input: the first column is x, remaining
// numeric columns become one series each, and non-numeric columns (e.g. the
// metrics CSV's split column) group rows into separate series.
std::vector<PlotSeries> series_from_table(const CsvTable& table, const std::string& origin);

// Fixed-size chart with axes, tick labels and a legend. Identical input
// yields identical bytes.
std::string render_line_chart(const std::vector<PlotSeries>& series, const std::string& x_label,
                              const std::string& title);

}  // namespace trg
