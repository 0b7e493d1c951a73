// Acceptance suite: one pass/fail line per criterion, every tolerance pinned
// in code. Progress goes to stderr; the ordered verdict lines go to stdout.
// Exit status is 0 only if every criterion passes.

#include <unistd.h>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "trg/checkpoint.hpp"
#include "trg/config.hpp"
#include "trg/gradcheck.hpp"
#include "trg/metrics.hpp"
#include "trg/trainer.hpp"

using namespace trg;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Verdict {
    int criterion;
    bool pass;
    std::string detail;
};

std::vector<Verdict> g_verdicts;

void record(int criterion, bool pass, const std::string& detail) {
    g_verdicts.push_back({criterion, pass, detail});
    std::cerr << "  criterion " << criterion << (pass ? " ok: " : " FAILED: ") << detail << "\n";
}

rng::Stream& probe_stream() {
    static rng::Stream s(0xACCE97);
    return s;
}

std::vector<double> random_vec(size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = probe_stream().uniform(lo, hi);
    return v;
}

// ---------------------------------------------------------------------------
// Reference-run configuration. The desk-scale grammar and the criterion-7
// schedule are fixed by contract; the trend-run sizes below were chosen from
// reference runs so the orderings are measured off the saturated regime.
// ---------------------------------------------------------------------------

RunConfig default_run_config() {
    RunConfig cfg;  // library defaults are the contract defaults
    return cfg;
}

constexpr int kAblateTrainSamples = 600;
constexpr int kAblateValSamples = 150;
constexpr int kAblateEpochs = 10;
constexpr int kAblateDrop = 5;
constexpr uint64_t kAblateSeeds[3] = {101, 102, 103};

constexpr int kSweepTrainSamples = 600;
constexpr int kSweepValSamples = 150;
constexpr int kSweepEpochs = 6;
constexpr int kSweepDrop = 3;
constexpr uint64_t kSweepSeeds[3] = {201, 202, 203};
constexpr int kSweepHeads[4] = {1, 3, 6, 8};

Dataset make_default_dataset(int count, uint64_t seed) {
    RunConfig cfg = default_run_config();
    return generate(cfg.grammar(), count, seed, 2);
}

// Trains one variant on a shared dataset; returns final-epoch val top1.
double train_final_top1(const Dataset& ds, const RunConfig& base, const std::string& variant,
                        int heads, int train_n, int val_n, int epochs, int drop, uint64_t seed) {
    RunConfig cfg = base;
    cfg.variant = variant;
    cfg.heads = heads;
    cfg.train_samples = train_n;
    cfg.val_samples = val_n;
    cfg.epochs = epochs;
    cfg.lr_drop_epoch = drop;
    cfg.seed = seed;
    cfg.validate();
    Model<float> model(cfg.model_config(), seed);
    auto result = train(model, ds, cfg.train_options());
    double top1 = 0;
    for (const auto& row : result.rows)
        if (row.split == "val") top1 = row.top1;
    return top1;
}

// Explicit double-loop oracle for criterion 3.
std::vector<double> loop_oracle(const std::vector<double>& x, const std::vector<double>& kernel,
                                const std::vector<double>& adj, int T, int C, int H, int W) {
    const int plane = H * W;
    auto conv_frame = [&](int t) {
        std::vector<double> y(static_cast<size_t>(C) * plane, 0.0);
        for (int oc = 0; oc < C; ++oc)
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx) {
                    double acc = 0.0;
                    for (int ic = 0; ic < C; ++ic)
                        for (int dy = 0; dy < 3; ++dy)
                            for (int dx = 0; dx < 3; ++dx) {
                                const int sy = yy + dy - 1, sx = xx + dx - 1;
                                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                                acc += kernel[((oc * C + ic) * 3 + dy) * 3 + dx] *
                                       x[((t * C + ic) * H + sy) * W + sx];
                            }
                    y[(oc * H + yy) * W + xx] = acc;
                }
        return y;
    };
    std::vector<std::vector<double>> convs(T);
    for (int t = 0; t < T; ++t) convs[t] = conv_frame(t);
    std::vector<double> out(static_cast<size_t>(T) * C * plane, 0.0);
    for (int i = 0; i < T; ++i) {
        for (int j = 0; j < T; ++j)
            for (int p = 0; p < C * plane; ++p)
                out[i * C * plane + p] += adj[i * T + j] * convs[j][p];
        for (int p = 0; p < C * plane; ++p)
            out[i * C * plane + p] = std::max(0.0, out[i * C * plane + p]);
    }
    return out;
}

// Independent metric oracles for criterion 10.
double topk_oracle(const std::vector<std::vector<double>>& scores, const std::vector<int>& truth,
                   int k) {
    long hits = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const int g = truth[i];
        int ahead = 0;
        for (size_t c = 0; c < scores[i].size(); ++c) {
            if (static_cast<int>(c) == g) continue;
            if (scores[i][c] > scores[i][g] ||
                (scores[i][c] == scores[i][g] && static_cast<int>(c) < g))
                ++ahead;
        }
        if (ahead < k) ++hits;
    }
    return static_cast<double>(hits) / scores.size();
}

double map_oracle(const std::vector<std::vector<double>>& scores,
                  const std::vector<std::vector<uint8_t>>& labels) {
    const size_t n = scores.size(), classes = scores[0].size();
    double ap_sum = 0.0;
    int evaluated = 0;
    for (size_t c = 0; c < classes; ++c) {
        long pos = 0;
        for (size_t i = 0; i < n; ++i) pos += labels[i][c] ? 1 : 0;
        if (!pos) continue;
        std::vector<bool> used(n, false);
        long seen = 0;
        double ap = 0.0;
        for (size_t k = 1; k <= n; ++k) {
            int best = -1;
            for (size_t i = 0; i < n; ++i) {
                if (used[i]) continue;
                if (best < 0 || scores[i][c] > scores[best][c]) best = static_cast<int>(i);
            }
            used[best] = true;
            if (labels[best][c]) {
                ++seen;
                ap += static_cast<double>(seen) / static_cast<double>(k);
            }
        }
        ap_sum += ap / pos;
        ++evaluated;
    }
    return ap_sum / evaluated;
}

// ---------------------------------------------------------------------------

void criterion_1_gradients() {
    const double t0 = now_s();
    GradCheckOptions opt;  // T=4, C=3, H=W=2, N=2, h=1e-5, tol 1e-4, bn off
    auto report = run_gradcheck(opt);
    const double dt = now_s() - t0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "gradcheck worst rel err %.3e (tol 1e-4) across dot/sum/bilinear in %.1fs",
                  report.worst, dt);
    record(1, report.passed && dt < 60.0, buf);
}

void criterion_2_adjacency_contract() {
    TrgLayerOptions opt;
    opt.heads = 3;
    opt.channels = 4;
    opt.height = opt.width = 3;
    TrgLayerParams<double> params(opt, "trg0", 11, false);
    const int T = 6;
    const Shape xsh{T, 4, 3, 3};
    bool ok = true;
    double worst_sum_err = 0.0;
    for (int rep = 0; rep < 100 && ok; ++rep) {
        auto xv = random_vec(xsh.numel());
        Tape<double> t;
        ParamBinder<double> bind(t, false);
        auto x = t.constant(xsh, xv);
        for (int head = 0; head < opt.heads; ++head) {
            auto adj = build_adjacency(bind, x, params, head, BnMode::Eval);
            for (int i = 0; i < T; ++i) {
                double sum = 0.0;
                for (int j = 0; j < T; ++j) {
                    const double a = adj.values()[i * T + j];
                    if (a < 0.0 || a > 1.0) ok = false;
                    sum += a;
                }
                worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));
            }
        }
    }
    ok = ok && worst_sum_err < 1e-6;

    // identical frames -> uniform 1/T
    auto frame = random_vec(4 * 9);
    std::vector<double> xv(xsh.numel());
    for (int t = 0; t < T; ++t) std::copy(frame.begin(), frame.end(), xv.begin() + t * frame.size());
    Tape<double> t;
    ParamBinder<double> bind(t, false);
    auto adj = build_adjacency(bind, t.constant(xsh, xv), params, 0, BnMode::Eval);
    double worst_uniform = 0.0;
    for (double a : adj.values()) worst_uniform = std::max(worst_uniform, std::abs(a - 1.0 / T));
    ok = ok && worst_uniform < 1e-6;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "rows stochastic over 100 inputs x 3 heads (worst row-sum err %.2e), "
                  "identical frames uniform within %.2e",
                  worst_sum_err, worst_uniform);
    record(2, ok, buf);
}

void criterion_3_graph_conv_oracle() {
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const int T = 1 + inst % 6;
        const int C = 2 + inst % 2;
        const int HW = 2 + (inst / 6) % 2;
        TrgLayerOptions opt;
        opt.heads = 1;
        opt.channels = C;
        opt.height = opt.width = HW;
        opt.batchnorm = false;
        TrgLayerParams<double> params(opt, "trg0", 500 + inst, false);
        auto xv = random_vec(static_cast<size_t>(T) * C * HW * HW);
        auto adj = random_vec(static_cast<size_t>(T) * T, 0.01, 1.0);
        for (int i = 0; i < T; ++i) {
            double s = 0.0;
            for (int j = 0; j < T; ++j) s += adj[i * T + j];
            for (int j = 0; j < T; ++j) adj[i * T + j] /= s;
        }
        Tape<double> t;
        ParamBinder<double> bind(t, false);
        auto y = graph_conv(bind, t.constant(Shape{T, C, HW, HW}, xv),
                            t.constant(Shape::mat(T, T), adj), params, 0, BnMode::Eval);
        auto oracle = loop_oracle(xv, params.spatial_kernels[0].value, adj, T, C, HW, HW);
        for (size_t i = 0; i < oracle.size(); ++i)
            worst = std::max(worst, std::abs(y.values()[i] - oracle[i]));
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "vectorized vs double-loop worst abs diff %.2e over 50 instances",
                  worst);
    record(3, worst < 1e-6, buf);
}

void criterion_4_aggregator_contract() {
    bool ok = true;
    std::string note;

    // beta rows sum to 1 and N=1 reduces to identity
    {
        TrgLayerOptions opt;
        opt.heads = 1;
        opt.channels = 2;
        opt.height = opt.width = 2;
        TrgLayerParams<double> params(opt, "trg0", 21, false);
        Tape<double> t;
        ParamBinder<double> bind(t, false);
        auto xv = random_vec(3 * 2 * 4);
        auto h = t.constant(Shape{3, 2, 2, 2}, xv);
        auto [out, beta] = aggregate(bind, {h}, params);
        for (double b : beta.values()) ok = ok && b == 1.0;
        for (size_t i = 0; i < xv.size(); ++i) ok = ok && out.values()[i] == xv[i];
    }
    // identical heads -> uniform weights; beta row sums
    {
        TrgLayerOptions opt;
        opt.heads = 3;
        opt.channels = 2;
        opt.height = opt.width = 2;
        TrgLayerParams<double> params(opt, "trg0", 22, false);
        Tape<double> t;
        ParamBinder<double> bind(t, false);
        auto h = t.constant(Shape{2, 2, 2, 2}, random_vec(16));
        auto [out, beta] = aggregate(bind, {h, h, h}, params);
        (void)out;
        for (int i = 0; i < 2; ++i) {
            double sum = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double b = beta.values()[i * 3 + k];
                ok = ok && std::abs(b - 1.0 / 3.0) < 1e-6;
                sum += b;
            }
            ok = ok && std::abs(sum - 1.0) < 1e-6;
        }
    }
    // hand-derived N=2 case
    {
        TrgLayerOptions opt;
        opt.heads = 2;
        opt.channels = 1;
        opt.height = opt.width = 2;
        TrgLayerParams<double> params(opt, "trg0", 23, false);
        Tape<double> t;
        ParamBinder<double> bind(t, false);
        auto h1 = t.constant(Shape{1, 1, 2, 2}, std::vector<double>(4, 1.0));
        auto h2 = t.constant(Shape{1, 1, 2, 2}, std::vector<double>(4, 2.0));
        auto [out, beta] = aggregate(bind, {h1, h2}, params);
        const double b0 = beta.values()[0], b1 = beta.values()[1];
        ok = ok && std::abs(b0 - 0.26894) < 1e-5 && std::abs(b1 - 0.73106) < 1e-5;
        for (int i = 0; i < 4; ++i)
            ok = ok && std::abs(out.values()[i] - (b0 * 1.0 + b1 * 2.0)) < 1e-9;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "beta' = [%.5f, %.5f] vs [0.26894, 0.73106]", b0, b1);
        note = buf;
    }
    record(4, ok, "beta rows sum to 1; N=1 identity; identical heads uniform; " + note);
}

void criterion_5_residual_identity() {
    bool ok = true;
    for (bool bn : {false, true}) {
        TrgLayerOptions opt;
        opt.heads = 3;
        opt.channels = 4;
        opt.height = opt.width = 2;
        opt.batchnorm = bn;
        TrgLayerParams<float> params(opt, "trg0", 31, /*zero_spatial=*/true);  // epoch-0 state
        auto xv = random_vec(5 * 4 * 4);
        std::vector<float> xf(xv.begin(), xv.end());
        for (auto mode : {BnMode::Training, BnMode::Eval}) {
            Tape<float> t;
            ParamBinder<float> bind(t, false);
            auto y = trg_layer_forward(bind, t.constant(Shape{5, 4, 2, 2}, xf), params, mode);
            for (size_t i = 0; i < xf.size(); ++i)
                ok = ok && y.values()[i] == std::max(0.0f, xf[i]);
        }
    }
    record(5, ok, "zero-initialized spatial transforms give trg_forward(X) == relu(X) bit-exactly");
}

struct TrainedModels {
    Dataset dataset;
    Model<float> full;
    Model<float> avgpool;
    double full_top1 = 0.0;
    double avgpool_top1 = 0.0;
    double seconds = 0.0;
};

TrainedModels* g_trained = nullptr;

void criterion_7_central_claim() {
    std::cerr << "  [criterion 7] generating the default 1500-sample dataset...\n";
    const double t0 = now_s();
    RunConfig cfg = default_run_config();  // 6 classes, sigma 0.25, 1200/300, 30 epochs, seed 7
    static TrainedModels models{make_default_dataset(cfg.train_samples + cfg.val_samples, cfg.seed),
                                Model<float>(cfg.model_config(), cfg.seed),
                                Model<float>([&] {
                                    RunConfig a = cfg;
                                    a.variant = "avgpool";
                                    return a.model_config();
                                }(), cfg.seed)};
    g_trained = &models;

    std::cerr << "  [criterion 7] training the full variant (30 epochs)...\n";
    auto full_result = train(models.full, models.dataset, cfg.train_options(), &std::cerr);
    for (const auto& row : full_result.rows)
        if (row.split == "val") models.full_top1 = row.top1;

    std::cerr << "  [criterion 7] training the avgpool baseline...\n";
    RunConfig acfg = cfg;
    acfg.variant = "avgpool";
    auto avg_result = train(models.avgpool, models.dataset, acfg.train_options(), &std::cerr);
    for (const auto& row : avg_result.rows)
        if (row.split == "val") models.avgpool_top1 = row.top1;

    models.seconds = now_s() - t0;
    const bool ok = models.full_top1 >= 0.90 && models.avgpool_top1 <= 0.70 &&
                    models.full_top1 - models.avgpool_top1 >= 0.20 && models.seconds <= 900.0;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "full val top1 %.4f (>= 0.90), avgpool %.4f (<= 0.70, order-blind ceiling 2/3), "
                  "gap %.4f (>= 0.20), %.0fs (<= 900s)",
                  models.full_top1, models.avgpool_top1, models.full_top1 - models.avgpool_top1,
                  models.seconds);
    record(7, ok, buf);
}

void criterion_6_permutation_semantics() {
    bool ok = true;

    // (a) the block is permutation-equivariant under eval-mode normalization
    {
        TrgLayerOptions opt;
        opt.heads = 3;
        opt.channels = 3;
        opt.height = opt.width = 2;
        TrgLayerParams<double> params(opt, "trg0", 41, false);
        const int T = 6, per = 3 * 4;
        auto xv = random_vec(static_cast<size_t>(T) * per);
        std::vector<int> perm = {4, 2, 0, 5, 1, 3};
        std::vector<double> pv(xv.size());
        for (int i = 0; i < T; ++i)
            std::copy(xv.begin() + perm[i] * per, xv.begin() + (perm[i] + 1) * per,
                      pv.begin() + i * per);
        Tape<double> t1, t2;
        ParamBinder<double> b1(t1, false), b2(t2, false);
        auto y = trg_layer_forward(b1, t1.constant(Shape{T, 3, 2, 2}, xv), params, BnMode::Eval);
        auto yp = trg_layer_forward(b2, t2.constant(Shape{T, 3, 2, 2}, pv), params, BnMode::Eval);
        double worst = 0.0;
        for (int i = 0; i < T; ++i)
            for (int p = 0; p < per; ++p)
                worst = std::max(worst,
                                 std::abs(yp.values()[i * per + p] - y.values()[perm[i] * per + p]));
        ok = ok && worst < 1e-5;
    }

    // (b) avgpool logits are permutation-invariant; (c) trained full-model
    // logits move under a frame swap on >= 95% of 100 probes
    int changed = 0;
    double worst_avg = 0.0;
    {
        TrainedModels& m = *g_trained;
        const ModelConfig& cfg = m.full.config();
        const long elems = m.dataset.frame_elems();
        rng::Stream picker(0xFACE);
        for (int probe = 0; probe < 100; ++probe) {
            const int sid = 1200 + static_cast<int>(picker.below(300));
            auto idx = sample_indices(SamplingMode::Sparse, m.dataset.raw_frames, cfg.frames, 1,
                                      false, nullptr);
            auto frames = gather_frames(m.dataset, m.dataset.samples[sid], idx);
            // swap two distinct frames
            const int a = static_cast<int>(picker.below(cfg.frames));
            int b = static_cast<int>(picker.below(cfg.frames - 1));
            if (b >= a) ++b;
            auto swapped = frames;
            for (long i = 0; i < elems; ++i)
                std::swap(swapped[a * elems + i], swapped[b * elems + i]);

            Tape<float> t1, t2, t3, t4;
            ParamBinder<float> b1(t1, false), b2(t2, false), b3(t3, false), b4(t4, false);
            auto l1 = m.full.forward(b1, frames, BnMode::Eval);
            auto l2 = m.full.forward(b2, swapped, BnMode::Eval);
            double diff = 0.0;
            for (int j = 0; j < cfg.classes; ++j)
                diff = std::max(diff, std::abs(static_cast<double>(l1.values()[j]) - l2.values()[j]));
            if (diff > 1e-6) ++changed;

            auto a1 = m.avgpool.forward(b3, frames, BnMode::Eval);
            auto a2 = m.avgpool.forward(b4, swapped, BnMode::Eval);
            for (int j = 0; j < cfg.classes; ++j)
                worst_avg = std::max(
                    worst_avg, std::abs(static_cast<double>(a1.values()[j]) - a2.values()[j]));
        }
        ok = ok && worst_avg < 1e-6 && changed >= 95;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "block equivariant within 1e-5; avgpool swap-invariant (worst %.2e); "
                  "full logits changed on %d/100 probes (>= 95)",
                  worst_avg, changed);
    record(6, ok, buf);
}

void criterion_8_ablation_ordering() {
    RunConfig base = default_run_config();
    const int n = kAblateTrainSamples + kAblateValSamples;
    std::map<std::string, double> mean;
    for (uint64_t seed : kAblateSeeds) {
        auto ds = make_default_dataset(n, seed);
        for (const std::string variant : {"avgpool", "graph_concat", "graph_elem_avg", "full"}) {
            std::cerr << "  [criterion 8] seed " << seed << " variant " << variant << "\n";
            mean[variant] += train_final_top1(ds, base, variant, base.heads, kAblateTrainSamples,
                                              kAblateValSamples, kAblateEpochs, kAblateDrop, seed);
        }
    }
    for (auto& [k, v] : mean) v /= 3.0;
    const bool ok = mean["full"] >= mean["graph_elem_avg"] && mean["graph_elem_avg"] >= mean["avgpool"] &&
                    mean["full"] >= mean["graph_concat"] && mean["graph_concat"] >= mean["avgpool"];
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "3-seed mean top1: full %.4f >= elem_avg %.4f >= avgpool %.4f and "
                  "full >= concat %.4f >= avgpool",
                  mean["full"], mean["graph_elem_avg"], mean["avgpool"], mean["graph_concat"]);
    record(8, ok, buf);
}

void criterion_9_head_sweep_trend() {
    RunConfig base = default_run_config();
    const int n = kSweepTrainSamples + kSweepValSamples;
    std::map<int, double> mean;
    for (uint64_t seed : kSweepSeeds) {
        auto ds = make_default_dataset(n, seed);
        for (int heads : kSweepHeads) {
            std::cerr << "  [criterion 9] seed " << seed << " heads " << heads << "\n";
            mean[heads] += train_final_top1(ds, base, "full", heads, kSweepTrainSamples,
                                            kSweepValSamples, kSweepEpochs, kSweepDrop, seed);
        }
    }
    for (auto& [k, v] : mean) v /= 3.0;
    const double gain = mean[3] - mean[1];
    const double tail = mean[8] - mean[6];
    const bool ok = gain > 0.0 && tail < gain;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "3-seed mean top1: N=1 %.4f, N=3 %.4f, N=6 %.4f, N=8 %.4f; gain %.4f > 0, "
                  "tail %.4f < gain",
                  mean[1], mean[3], mean[6], mean[8], gain, tail);
    record(9, ok, buf);
}

void criterion_10_metric_oracles() {
    rng::Stream s(10101);
    bool ok = true;
    for (int inst = 0; inst < 1000 && ok; ++inst) {
        const int n = 1 + static_cast<int>(s.below(8));
        const int classes = 2 + static_cast<int>(s.below(4));
        std::vector<std::vector<double>> scores(n, std::vector<double>(classes));
        std::vector<int> truth(n);
        std::vector<std::vector<uint8_t>> labels(n, std::vector<uint8_t>(classes, 0));
        bool any = false;
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < classes; ++c) {
                scores[i][c] = static_cast<double>(s.below(4)) / 4.0;
                labels[i][c] = s.uniform() < 0.4 ? 1 : 0;
                any = any || labels[i][c];
            }
            truth[i] = static_cast<int>(s.below(classes));
        }
        if (!any) labels[0][0] = 1;
        std::vector<std::vector<int>> ranked;
        for (const auto& row : scores) ranked.push_back(rank_classes(row));
        for (int k = 1; k <= classes; ++k)
            ok = ok && topk_precision(ranked, truth, k) == topk_oracle(scores, truth, k);
        ok = ok &&
             std::abs(mean_average_precision(scores, labels) - map_oracle(scores, labels)) < 1e-12;
    }
    // worked AP example: positives at ranks 1 and 3 of 4
    std::vector<std::vector<double>> sc = {{0.9}, {0.7}, {0.5}, {0.3}};
    std::vector<std::vector<uint8_t>> lb = {{1}, {0}, {1}, {0}};
    const double ap = mean_average_precision(sc, lb);
    ok = ok && std::abs(ap - 0.8333) < 1e-4;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "1000 random instances match brute force exactly; worked AP %.6f vs 0.8333", ap);
    record(10, ok, buf);
}

void criterion_11_optimizer_exactness() {
    Parameter<double> p("p", Shape::scalar());
    p.value = {1.0};
    p.grad = {0.1};
    SgdNesterov<double> sgd({&p}, {0.9, 5e-4, true});
    sgd.step(0.001);
    const double err = std::abs(p.value[0] - 0.99980905);
    Schedule s{0.001, 10.0, 50, 100};
    const bool lr_ok = s.lr_at(0) == 0.001 && s.lr_at(49) == 0.001 && s.lr_at(50) == 0.0001 &&
                       s.lr_at(99) == 0.0001;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "sgd worked example err %.2e (<= 1e-12); lr 0.001->0.0001 at the drop%s",
                  err, lr_ok ? "" : " MISMATCH");
    record(11, err <= 1e-12 && lr_ok, buf);
}

void criterion_12_complexity_accounting() {
    bool ok = trg_formula_params(3, 16, 1) == 7689 && trg_formula_params(1, 1, 1) == 11;

    // enumeration under the formula's accounting: C' = C, no batchnorm;
    // shared terms match exactly, the aggregator differs by the formula's
    // N^2 vs the shared scalar w' (equal in the N=1 unit case)
    ModelConfig unit;
    unit.frames = 2;
    unit.in_channels = 1;
    unit.in_height = 4;
    unit.in_width = 4;
    unit.channels = 1;
    unit.heads = 1;
    unit.sim_channels = 1;
    unit.batchnorm = false;
    unit.classes = 2;
    Model<double> m1(unit, 1);
    ok = ok && m1.param_breakdown().trg == trg_formula_params(1, 1, 1);

    ModelConfig big = unit;
    big.in_channels = 2;
    big.in_height = 8;
    big.in_width = 8;
    big.channels = 16;
    big.heads = 3;
    big.sim_channels = 16;
    Model<double> m3(big, 2);
    auto b = m3.param_breakdown();
    ok = ok && b.trg_similarity == 3 * 256 && b.trg_spatial == 9 * 3 * 256 &&
         b.trg_aggregator == 1 && (trg_formula_params(3, 16, 1) - b.trg == 3 * 3 - 1);
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "formula(3,16)=7689, formula(1,1)=11; enumeration matches term-by-term "
                  "(similarity %ld, spatial %ld; aggregator: 1 shared scalar vs formula N^2)",
                  b.trg_similarity, b.trg_spatial);
    record(12, ok, buf);
}

void criterion_13_determinism_roundtrips() {
    namespace fs = std::filesystem;
    bool ok = true;

    // identical seeds -> identical metrics CSV
    EventGrammar g;
    g.prototype_count = 2;
    g.class_strings = {"A,B", "B,A"};
    g.noise_sigma = 0.15;
    g.frames_per_event = 4;
    g.raw_frames = 8;
    g.in_channels = 1;
    g.in_height = 8;
    g.in_width = 8;
    auto ds = generate(g, 40, 61);
    ModelConfig cfg;
    cfg.frames = 4;
    cfg.in_channels = 1;
    cfg.in_height = 8;
    cfg.in_width = 8;
    cfg.channels = 4;
    cfg.heads = 2;
    cfg.classes = 2;
    TrainOptions topt;
    topt.schedule = Schedule{0.02, 10.0, 2, 3};
    topt.train_samples = 32;
    topt.val_samples = 8;
    topt.seed = 62;
    Model<float> ma(cfg, 63), mb(cfg, 63);
    const std::string csv_a = metrics_csv_string(train(ma, ds, topt).rows);
    const std::string csv_b = metrics_csv_string(train(mb, ds, topt).rows);
    ok = ok && csv_a == csv_b;

    // TRGD and TRGW round-trip bit-exactly
    const fs::path dir = fs::temp_directory_path() / ("trg_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string dpath = (dir / "roundtrip.trgd").string();
    write_dataset(ds, dpath);
    ok = ok && read_dataset(dpath) == ds;
    std::ifstream f1(dpath, std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    f1.close();
    write_dataset(read_dataset(dpath), dpath);
    std::ifstream f2(dpath, std::ios::binary);
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    f2.close();
    ok = ok && bytes1 == bytes2;

    const std::string wpath = (dir / "roundtrip.trgw").string();
    save_checkpoint(ma, wpath);
    Model<float> loaded = load_checkpoint(wpath);
    auto pa = ma.parameters();
    auto pb = loaded.parameters();
    for (size_t i = 0; i < pa.size(); ++i) ok = ok && pa[i]->value == pb[i]->value;
    auto ba = ma.buffers();
    auto bb = loaded.buffers();
    for (size_t i = 0; i < ba.size(); ++i) ok = ok && *ba[i].second == *bb[i].second;
    fs::remove_all(dir);

    record(13, ok, "identical seeds give identical CSVs; TRGD/TRGW round-trip bit-exactly");
}

}  // namespace

int main() {
    const double t0 = now_s();
    criterion_1_gradients();
    criterion_2_adjacency_contract();
    criterion_3_graph_conv_oracle();
    criterion_4_aggregator_contract();
    criterion_5_residual_identity();
    criterion_7_central_claim();   // trains the models criterion 6 probes
    criterion_6_permutation_semantics();
    criterion_8_ablation_ordering();
    criterion_9_head_sweep_trend();
    criterion_10_metric_oracles();
    criterion_11_optimizer_exactness();
    criterion_12_complexity_accounting();
    criterion_13_determinism_roundtrips();

    std::sort(g_verdicts.begin(), g_verdicts.end(),
              [](const Verdict& a, const Verdict& b) { return a.criterion < b.criterion; });
    bool all = true;
    for (const auto& v : g_verdicts) {
        std::cout << (v.pass ? "[PASS]" : "[FAIL]") << " criterion " << v.criterion << ": "
                  << v.detail << "\n";
        all = all && v.pass;
    }
    std::cout << (all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << " (" << g_verdicts.size()
              << " criteria, " << static_cast<long>(now_s() - t0) << "s)\n";
    return all ? 0 : 1;
}
