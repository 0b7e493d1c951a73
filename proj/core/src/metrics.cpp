#include "trg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace trg {

std::vector<int> rank_classes(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    return order;
}

double topk_precision(const std::vector<std::vector<int>>& ranked, const std::vector<int>& truth,
                      int k) {
    if (ranked.empty()) throw MetricError("topk_precision: empty test set");
    if (ranked.size() != truth.size())
        throw DimensionError("topk_precision: " + std::to_string(ranked.size()) +
                             " prediction lists for " + std::to_string(truth.size()) + " truths");
    if (k < 1) throw ContractError("topk_precision: k must be >= 1");
    long hits = 0;
    for (size_t i = 0; i < ranked.size(); ++i) {
        if (static_cast<int>(ranked[i].size()) < k)
            throw DimensionError("topk_precision: sample " + std::to_string(i) + " ranks only " +
                                 std::to_string(ranked[i].size()) + " classes, need " +
                                 std::to_string(k));
        for (int j = 0; j < k; ++j)
            if (ranked[i][j] == truth[i]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<uint8_t>>& labels) {
    if (scores.empty()) throw MetricError("mean_average_precision: empty test set");
    if (scores.size() != labels.size())
        throw DimensionError("mean_average_precision: score/label row count mismatch");
    const size_t n = scores.size();
    const size_t classes = scores[0].size();
    for (size_t i = 0; i < n; ++i)
        if (scores[i].size() != classes || labels[i].size() != classes)
            throw DimensionError("mean_average_precision: ragged score/label rows");

    double ap_sum = 0.0;
    int evaluated = 0;
    std::vector<int> order(n);
    for (size_t c = 0; c < classes; ++c) {
        long positives = 0;
        for (size_t i = 0; i < n; ++i) positives += labels[i][c] ? 1 : 0;
        if (positives == 0) continue;  // class not represented: skipped
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return scores[a][c] > scores[b][c];  // stable: ties by ascending sample index
        });
        long seen_pos = 0;
        double ap = 0.0;
        for (size_t k = 0; k < n; ++k) {
            if (!labels[order[k]][c]) continue;
            ++seen_pos;
            ap += static_cast<double>(seen_pos) / static_cast<double>(k + 1);
        }
        ap_sum += ap / static_cast<double>(positives);
        ++evaluated;
    }
    if (evaluated == 0)
        throw MetricError("mean_average_precision: no class has a positive sample");
    return ap_sum / evaluated;
}

namespace {
std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace

std::string metrics_csv_string(const std::vector<MetricsRow>& rows) {
    std::string out = "epoch,split,loss,top1,top5,map\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch);
        out += ',';
        out += r.split;
        out += ',';
        out += fixed6(r.loss);
        out += ',';
        out += fixed6(r.top1);
        out += ',';
        out += fixed6(r.top5);
        out += ',';
        if (r.map) out += fixed6(*r.map);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    const std::string s = metrics_csv_string(rows);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

long trg_formula_params(int heads, int channels, int stages) {
    const long n = heads, c = channels;
    return stages * (n * c * c + 9 * n * c * c + n * n);
}

}  // namespace trg
