#pragma once

// Sequential mini-batch training loop with per-epoch held-out evaluation.
// Deterministic under a fixed seed: shuffling and frame jitter draw from
// named sub-streams of the root seed.

#include <iosfwd>
#include <vector>

#include "trg/metrics.hpp"
#include "trg/model.hpp"
#include "trg/optimizer.hpp"
#include "trg/synthetic.hpp"

namespace trg {

struct TrainOptions {
    // Desk-scale default schedule; the original 100-epoch/drop-50 recipe is a
    // plain configuration of the same fields.
    Schedule schedule{0.001, 10.0, 15, 30};
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool nesterov = true;
    int batch_size = 8;
    int eval_clips = 2;  // prediction scores averaged over this many clips
    SamplingMode sampling = SamplingMode::Sparse;
    int stride = 4;
    int train_samples = 1200;
    int val_samples = 300;
    uint64_t seed = 7;
};

struct EvalMetrics {
    double loss = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
    std::optional<double> map;
};

// Eval-mode metrics on the given samples, averaging logits over `clips`
// deterministic clips per sample.
EvalMetrics evaluate(Model<float>& model, const Dataset& ds, const std::vector<int>& sample_ids,
                     SamplingMode sampling, int stride, int clips);

struct TrainResult {
    std::vector<MetricsRow> rows;  // epoch 0: initial val row; then train+val per epoch
    double best_val_top1 = 0.0;
};

// Trains in place. The first opt.train_samples dataset entries form the
// training split, the next opt.val_samples the held-out split. Throws
// DivergenceError naming the offending step if the loss goes non-finite.
TrainResult train(Model<float>& model, const Dataset& ds, const TrainOptions& opt,
                  std::ostream* log = nullptr);

}  // namespace trg
