#pragma once

// Run configuration: one flat JSON object covering model, grammar, schedule,
// optimizer and run fields. Unknown keys are errors, not warnings — a typo'd
// key would otherwise silently poison an ablation.

#include <cstdint>
#include <string>
#include <vector>

#include "trg/model.hpp"
#include "trg/optimizer.hpp"
#include "trg/synthetic.hpp"
#include "trg/trainer.hpp"

namespace trg {

struct RunConfig {
    // model
    int frames = 8;
    int channels = 8;
    int heads = 3;
    int trg_layers = 1;
    std::string similarity = "dot";
    int sim_channels = 0;
    std::string variant = "full";
    std::string label_mode = "single";
    bool batchnorm = true;
    bool bn_on_similarity = false;
    bool per_head_agg_weight = false;
    bool scale_similarity = false;
    // grammar
    int prototypes = 3;
    std::vector<std::string> class_strings = {"A,B", "B,A", "A,C", "C,A", "B,B", "C,C"};
    double noise_sigma = 0.25;
    int frames_per_event = 8;
    int raw_frames = 16;
    int in_channels = 3;
    int in_height = 16;
    int in_width = 16;
    // schedule
    int epochs = 30;
    double lr = 0.001;
    int lr_drop_epoch = 15;
    double lr_drop_factor = 10.0;
    // optimizer
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool nesterov = true;
    int batch_size = 8;
    // run
    int train_samples = 1200;
    int val_samples = 300;
    std::string sampling = "sparse";
    int stride = 4;
    int eval_clips = 2;
    uint64_t seed = 7;
    std::string dataset;  // TRGD path for train/eval commands
    std::string out_dir = "out";
    int workers = 1;

    int class_count() const {
        return label_mode == "multi" ? prototypes : static_cast<int>(class_strings.size());
    }

    ModelConfig model_config() const;
    EventGrammar grammar() const;
    TrainOptions train_options() const;
    void validate() const;
};

// Parse from a JSON object string / file. Missing keys take defaults;
// unknown keys throw ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Deterministic dump (sorted keys, 2-space indent, trailing newline).
// dump(parse(dump(c))) == dump(c).
std::string dump_run_config(const RunConfig& cfg);

}  // namespace trg
