#pragma once

// Evaluation metrics (top-k precision, mean average precision), the metrics
// CSV format, and parameter accounting including the closed-form count for
// the temporal layers.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trg/errors.hpp"

namespace trg {

struct MetricsRow {
    int epoch = 0;
    std::string split;  // "train" or "val"
    double loss = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
    std::optional<double> map;  // multi-label runs only
    double wall_time = 0.0;     // seconds; not serialized
};

// Class indices ranked by descending score; ties broken by ascending class
// index so runs are deterministic.
std::vector<int> rank_classes(const std::vector<double>& scores);

// Fraction of samples whose true class appears among the first K entries of
// its ranked prediction list.
double topk_precision(const std::vector<std::vector<int>>& ranked, const std::vector<int>& truth,
                      int k);

// Mean over classes of average precision; samples ranked by descending score
// with ties broken by ascending sample index, AP normalized by the class's
// positive count, classes without positives skipped.
double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<uint8_t>>& labels);

// header `epoch,split,loss,top1,top5,map`, LF endings, 6-decimal fixed
// formatting; the map column is left empty for single-label rows.
std::string metrics_csv_string(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Closed-form count of the scalars a stack of temporal reasoning layers
// introduces: sum over stages of (N*C^2 + 9*N*C^2 + N^2) — similarity
// transforms, spatial transforms, aggregator.
long trg_formula_params(int heads, int channels, int stages);

}  // namespace trg
