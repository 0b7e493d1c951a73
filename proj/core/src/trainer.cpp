#include "trg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace trg {

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Stable scalar losses for already-averaged logits (metric reporting only;
// the trained loss goes through the tape).
double ce_loss(const std::vector<double>& s, int g) {
    double mx = s[0];
    for (double v : s) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : s) denom += std::exp(v - mx);
    return -(s[g] - mx) + std::log(denom);
}

double bce_loss(const std::vector<double>& s, const std::vector<uint8_t>& y) {
    double acc = 0.0;
    for (size_t j = 0; j < s.size(); ++j)
        acc += std::max(s[j], 0.0) - s[j] * y[j] + std::log1p(std::exp(-std::abs(s[j])));
    return acc;
}

Label sample_label(const Dataset& ds, const SyntheticSample& s) {
    if (ds.label_mode == LabelMode::Single) return Label(static_cast<int>(s.label));
    return Label(s.multi);
}

struct ScoreSheet {
    std::vector<std::vector<double>> scores;
    std::vector<int> truths;                    // single-label
    std::vector<std::vector<uint8_t>> labels;   // multi-label
    double loss_sum = 0.0;

    EvalMetrics finish(LabelMode mode) const {
        EvalMetrics m;
        const size_t n = scores.size();
        m.loss = loss_sum / static_cast<double>(n);
        const int classes = static_cast<int>(scores[0].size());
        const int k5 = std::min(5, classes);
        if (mode == LabelMode::Single) {
            std::vector<std::vector<int>> ranked;
            ranked.reserve(n);
            for (const auto& s : scores) ranked.push_back(rank_classes(s));
            m.top1 = topk_precision(ranked, truths, 1);
            m.top5 = topk_precision(ranked, truths, k5);
        } else {
            // multi-label top-k: hit when any positive class ranks in the top k
            long hit1 = 0, hit5 = 0;
            for (size_t i = 0; i < n; ++i) {
                auto order = rank_classes(scores[i]);
                for (int k = 0; k < k5; ++k) {
                    if (labels[i][order[k]]) {
                        ++hit5;
                        if (k < 1) ++hit1;
                        break;
                    }
                }
            }
            m.top1 = static_cast<double>(hit1) / n;
            m.top5 = static_cast<double>(hit5) / n;
            m.map = mean_average_precision(scores, labels);
        }
        return m;
    }
};

void check_dataset(const Model<float>& model, const Dataset& ds) {
    const ModelConfig& cfg = model.config();
    if (ds.in_channels != cfg.in_channels || ds.in_height != cfg.in_height ||
        ds.in_width != cfg.in_width)
        throw ConfigError("trainer: dataset frames are " + std::to_string(ds.in_channels) + "x" +
                          std::to_string(ds.in_height) + "x" + std::to_string(ds.in_width) +
                          ", model expects " + std::to_string(cfg.in_channels) + "x" +
                          std::to_string(cfg.in_height) + "x" + std::to_string(cfg.in_width));
    if (ds.class_count != cfg.classes)
        throw ConfigError("trainer: dataset has " + std::to_string(ds.class_count) +
                          " classes, model has " + std::to_string(cfg.classes));
    if (ds.label_mode != cfg.label_mode)
        throw ConfigError("trainer: dataset and model disagree on label mode");
}

}  // namespace

EvalMetrics evaluate(Model<float>& model, const Dataset& ds, const std::vector<int>& sample_ids,
                     SamplingMode sampling, int stride, int clips) {
    check_dataset(model, ds);
    if (sample_ids.empty()) throw MetricError("evaluate: empty sample set");
    if (clips < 1) throw ConfigError("evaluate: clips must be >= 1");
    const ModelConfig& cfg = model.config();
    ScoreSheet sheet;
    for (int id : sample_ids) {
        const auto& sample = ds.samples.at(id);
        std::vector<double> avg(cfg.classes, 0.0);
        for (int c = 0; c < clips; ++c) {
            auto idx = sample_indices(sampling, ds.raw_frames, cfg.frames, stride,
                                      /*train=*/false, nullptr, c, clips);
            auto frames = gather_frames(ds, sample, idx);
            Tape<float> tape;
            ParamBinder<float> bind(tape, /*bind_grads=*/false);
            auto logits = model.forward(bind, frames, BnMode::Eval);
            auto vals = logits.values();
            for (int j = 0; j < cfg.classes; ++j) avg[j] += static_cast<double>(vals[j]);
        }
        for (auto& v : avg) v /= clips;
        if (ds.label_mode == LabelMode::Single) {
            sheet.truths.push_back(static_cast<int>(sample.label));
            sheet.loss_sum += ce_loss(avg, static_cast<int>(sample.label));
        } else {
            sheet.labels.push_back(sample.multi);
            sheet.loss_sum += bce_loss(avg, sample.multi);
        }
        sheet.scores.push_back(std::move(avg));
    }
    return sheet.finish(ds.label_mode);
}

TrainResult train(Model<float>& model, const Dataset& ds, const TrainOptions& opt,
                  std::ostream* log) {
    check_dataset(model, ds);
    opt.schedule.validate();
    if (opt.batch_size < 1) throw ConfigError("trainer: batch size must be >= 1");
    if (opt.train_samples < 1 || opt.val_samples < 1)
        throw ConfigError("trainer: need at least one train and one val sample");
    if (static_cast<size_t>(opt.train_samples + opt.val_samples) > ds.samples.size())
        throw ConfigError("trainer: split " + std::to_string(opt.train_samples) + "+" +
                          std::to_string(opt.val_samples) + " exceeds the " +
                          std::to_string(ds.samples.size()) + "-sample dataset");

    const ModelConfig& cfg = model.config();
    std::vector<int> train_ids(opt.train_samples);
    std::iota(train_ids.begin(), train_ids.end(), 0);
    std::vector<int> val_ids(opt.val_samples);
    std::iota(val_ids.begin(), val_ids.end(), opt.train_samples);

    SgdNesterov<float> sgd(model.parameters(),
                           {opt.momentum, opt.weight_decay, opt.nesterov});
    const uint64_t shuffle_seed = rng::derive(opt.seed, "shuffle");
    const uint64_t sampling_seed = rng::derive(opt.seed, "sampling");

    auto guarded_eval = [&](const std::string& step) {
        try {
            return evaluate(model, ds, val_ids, opt.sampling, opt.stride, opt.eval_clips);
        } catch (const NumericError& e) {
            throw DivergenceError("training diverged at " + step + ": " + e.what());
        }
    };

    TrainResult result;
    {
        const double t0 = now_seconds();
        EvalMetrics m = guarded_eval("initial evaluation");
        result.rows.push_back({0, "val", m.loss, m.top1, m.top5, m.map, now_seconds() - t0});
        result.best_val_top1 = m.top1;
    }

    for (int epoch = 1; epoch <= opt.schedule.total_epochs; ++epoch) {
        const double t0 = now_seconds();
        const double lr = opt.schedule.lr_at(epoch - 1);
        auto order = train_ids;
        rng::Stream shuffler(rng::derive(shuffle_seed, static_cast<uint64_t>(epoch)));
        shuffler.shuffle(order);

        ScoreSheet sheet;
        for (size_t b = 0; b < order.size(); b += opt.batch_size) {
            const size_t batch_end = std::min(order.size(), b + opt.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(batch_end - b);
            sgd.zero_grad();
            for (size_t i = b; i < batch_end; ++i) {
                const int id = order[i];
                const auto& sample = ds.samples[id];
                rng::Stream jitter(rng::derive(rng::derive(sampling_seed, static_cast<uint64_t>(epoch)),
                                               static_cast<uint64_t>(id)));
                auto idx = sample_indices(opt.sampling, ds.raw_frames, cfg.frames, opt.stride,
                                          /*train=*/true, &jitter);
                auto frames = gather_frames(ds, sample, idx);
                Tape<float> tape;
                ParamBinder<float> bind(tape, /*bind_grads=*/true);
                const std::string step = "epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(b / opt.batch_size) + ", sample " +
                                         std::to_string(id);
                double loss_value;
                Tensor<float> loss;
                std::vector<double> logit_values;
                try {
                    auto logits = model.forward(bind, frames, BnMode::Training);
                    loss = model.loss(tape, logits, sample_label(ds, sample));
                    loss_value = loss.item();
                    auto vals = logits.values();
                    logit_values.assign(vals.begin(), vals.end());
                } catch (const NumericError& e) {
                    throw DivergenceError("training diverged at " + step + ": " + e.what());
                }
                if (!std::isfinite(loss_value))
                    throw DivergenceError("training diverged: non-finite loss at " + step);
                tape.backward(tape.scale(loss, inv_batch));

                sheet.loss_sum += loss_value;
                sheet.scores.push_back(std::move(logit_values));
                if (ds.label_mode == LabelMode::Single)
                    sheet.truths.push_back(static_cast<int>(sample.label));
                else
                    sheet.labels.push_back(sample.multi);
            }
            sgd.step(lr);
        }
        EvalMetrics train_m = sheet.finish(ds.label_mode);
        result.rows.push_back(
            {epoch, "train", train_m.loss, train_m.top1, train_m.top5, train_m.map, 0.0});

        EvalMetrics val_m = guarded_eval("epoch " + std::to_string(epoch) + " evaluation");
        const double dt = now_seconds() - t0;
        result.rows.back().wall_time = dt;
        result.rows.push_back({epoch, "val", val_m.loss, val_m.top1, val_m.top5, val_m.map, dt});
        result.best_val_top1 = std::max(result.best_val_top1, val_m.top1);

        if (log)
            (*log) << "epoch " << epoch << " lr " << lr << " train_loss " << train_m.loss
                   << " val_top1 " << val_m.top1 << "\n";
    }
    return result;
}

}  // namespace trg
